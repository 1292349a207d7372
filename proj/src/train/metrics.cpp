#include "dynsplat/train/metrics.hpp"

#include "dynsplat/core/types.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace dynsplat {

namespace {

void check(const Image& pred, const Image& target, const Raster<std::uint8_t>& mask) {
    if (pred.width != target.width || pred.height != target.height || pred.channels != target.channels)
        throw ConfigError("metrics: image shapes differ");
    if (!mask.data.empty() && !mask.same_shape(pred.width, pred.height))
        throw ConfigError("metrics: mask shape differs from the images");
}

bool kept(const Raster<std::uint8_t>& mask, std::size_t p) { return mask.data.empty() || mask.data[p] != 0; }

constexpr int kRadius = 5;

std::array<double, 2 * kRadius + 1> gaussian_kernel() {
    std::array<double, 2 * kRadius + 1> k{};
    double sum = 0;
    for (int i = -kRadius; i <= kRadius; ++i) sum += k[static_cast<std::size_t>(i + kRadius)] = std::exp(-i * i / (2.0 * 1.5 * 1.5));
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable weighted local mean with border renormalization.
std::vector<double> blur(const std::vector<double>& in, int w, int h) {
    static const auto k = gaussian_kernel();
    std::vector<double> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0, ws = 0;
            for (int d = -kRadius; d <= kRadius; ++d) {
                const int xx = x + d;
                if (xx < 0 || xx >= w) continue;
                const double kw = k[static_cast<std::size_t>(d + kRadius)];
                s += kw * in[static_cast<std::size_t>(y * w + xx)];
                ws += kw;
            }
            tmp[static_cast<std::size_t>(y * w + x)] = s / ws;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0, ws = 0;
            for (int d = -kRadius; d <= kRadius; ++d) {
                const int yy = y + d;
                if (yy < 0 || yy >= h) continue;
                const double kw = k[static_cast<std::size_t>(d + kRadius)];
                s += kw * tmp[static_cast<std::size_t>(yy * w + x)];
                ws += kw;
            }
            out[static_cast<std::size_t>(y * w + x)] = s / ws;
        }
    return out;
}

} // namespace

double psnr(const Image& pred, const Image& target, const Raster<std::uint8_t>& mask) {
    check(pred, target, mask);
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!kept(mask, p)) continue;
        for (int c = 0; c < pred.channels; ++c) {
            const std::size_t k = p * static_cast<std::size_t>(pred.channels) + static_cast<std::size_t>(c);
            const double d = static_cast<double>(pred.data[k]) - static_cast<double>(target.data[k]);
            sum += d * d;
            ++count;
        }
    }
    if (count == 0) return kPsnrCap;
    const double mse = sum / static_cast<double>(count);
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& pred, const Image& target, const Raster<std::uint8_t>& mask) {
    check(pred, target, mask);
    const int w = pred.width, h = pred.height;
    const std::size_t n = pred.pixel_count();
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    std::size_t count = 0;
    for (int c = 0; c < pred.channels; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = pred.data[p * static_cast<std::size_t>(pred.channels) + static_cast<std::size_t>(c)];
            y[p] = target.data[p * static_cast<std::size_t>(pred.channels) + static_cast<std::size_t>(c)];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = blur(x, w, h), my = blur(y, w, h);
        const auto sxx = blur(xx, w, h), syy = blur(yy, w, h), sxy = blur(xy, w, h);
        for (std::size_t p = 0; p < n; ++p) {
            if (!kept(mask, p)) continue;
            const double vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cov = sxy[p] - mx[p] * my[p];
            total += ((2 * mx[p] * my[p] + c1) * (2 * cov + c2)) /
                     ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return count == 0 ? 1.0 : total / static_cast<double>(count);
}

} // namespace dynsplat
