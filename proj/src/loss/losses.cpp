#include "dynsplat/loss/losses.hpp"

#include <cmath>
#include <cstdio>

namespace dynsplat {

namespace {

template <typename T> void check_pair(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                                      const Raster<T>* grad, const char* what) {
    if (pred.width != target.width || pred.height != target.height || pred.channels != target.channels)
        throw ConfigError(std::string(what) + ": prediction and target shapes differ");
    if (!mask.data.empty() && !mask.same_shape(pred.width, pred.height))
        throw ConfigError(std::string(what) + ": mask shape differs from the prediction");
    if (grad && (grad->width != pred.width || grad->height != pred.height || grad->channels != pred.channels))
        throw ConfigError(std::string(what) + ": gradient raster shape differs from the prediction");
}

inline bool kept(const Raster<std::uint8_t>& mask, std::size_t pixel) { return mask.data.empty() || mask.data[pixel] != 0; }

template <typename T> T sign(T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); }

} // namespace

template <typename T>
LossValue<T> loss_color(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                        Raster<T>* grad, T scale) {
    check_pair(pred, target, mask, grad, "color loss");
    const int ch = pred.channels;
    std::size_t count = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) count += kept(mask, p);
    if (count == 0) return {T(0), true};
    const T norm = T(1) / static_cast<T>(count * static_cast<std::size_t>(ch));
    T sum = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!kept(mask, p)) continue;
        for (int c = 0; c < ch; ++c) {
            const std::size_t k = p * static_cast<std::size_t>(ch) + static_cast<std::size_t>(c);
            const T diff = pred.data[k] - target.data[k];
            sum += std::abs(diff);
            if (grad) grad->data[k] += scale * norm * sign(diff);
        }
    }
    return {sum * norm, false};
}

template <typename T>
LossValue<T> loss_depth_binocular(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                                  Raster<T>* grad, T scale) {
    check_pair(pred, target, mask, grad, "binocular depth loss");
    const T eps = static_cast<T>(kDepthEpsilon);
    std::size_t count = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) count += kept(mask, p);
    if (count == 0) return {T(0), true};
    const T norm = T(1) / static_cast<T>(count);
    T sum = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!kept(mask, p)) continue;
        const T inv_pred = T(1) / (pred.data[p] + eps);
        const T diff = inv_pred - T(1) / (target.data[p] + eps);
        sum += std::abs(diff);
        if (grad) grad->data[p] -= scale * norm * sign(diff) * inv_pred * inv_pred;
    }
    return {sum * norm, false};
}

template <typename T>
LossValue<T> loss_depth_monocular(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                                  Raster<T>* grad, T scale) {
    check_pair(pred, target, mask, grad, "monocular depth loss");
    std::size_t count = 0;
    T mx = 0, my = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!kept(mask, p)) continue;
        ++count;
        mx += pred.data[p];
        my += target.data[p];
    }
    if (count < 2) return {T(1), true};
    const T k = static_cast<T>(count);
    mx /= k;
    my /= k;
    T cov = 0, vx = 0, vy = 0;
    for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
        if (!kept(mask, p)) continue;
        const T dx = pred.data[p] - mx, dy = target.data[p] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    cov /= k;
    vx /= k;
    vy /= k;
    if (vx <= T(1e-12) || vy <= T(1e-12)) return {T(1), true};
    const T s = std::sqrt(vx * vy + static_cast<T>(kPearsonEpsilon));
    const T rho = cov / s;
    if (grad) {
        for (std::size_t p = 0; p < pred.pixel_count(); ++p) {
            if (!kept(mask, p)) continue;
            const T dx = pred.data[p] - mx, dy = target.data[p] - my;
            const T d_rho = (dy / s - cov * vy * dx / (s * s * s)) / k;
            grad->data[p] -= scale * d_rho;
        }
    }
    return {T(1) - rho, false};
}

template <typename T> T total_variation(const Raster<T>& image, Raster<T>* grad, T scale) {
    const int w = image.width, h = image.height, ch = image.channels;
    const std::size_t pairs = static_cast<std::size_t>(ch) *
                              (static_cast<std::size_t>(h) * (w > 0 ? w - 1 : 0) + static_cast<std::size_t>(w) * (h > 0 ? h - 1 : 0));
    if (pairs == 0) return T(0);
    const T norm = T(1) / static_cast<T>(pairs);
    T sum = 0;
    auto pair = [&](std::size_t a, std::size_t b) {
        const T diff = image.data[b] - image.data[a];
        sum += std::abs(diff);
        if (grad) {
            const T g = scale * norm * sign(diff);
            grad->data[b] += g;
            grad->data[a] -= g;
        }
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                if (x + 1 < w) pair(image.index(x, y, c), image.index(x + 1, y, c));
                if (y + 1 < h) pair(image.index(x, y, c), image.index(x, y + 1, c));
            }
    return sum * norm;
}

template <typename T>
T loss_spatial_tv(const Raster<T>& color, const Raster<T>& depth, Raster<T>* d_color, Raster<T>* d_depth, T scale) {
    if (!depth.same_shape(color.width, color.height) || depth.channels != 1)
        throw ConfigError("spatial TV: depth must be single-channel and match the color image");
    const T eps = static_cast<T>(kDepthEpsilon);
    Raster<T> inv(depth.width, depth.height, 1);
    for (std::size_t p = 0; p < inv.data.size(); ++p) inv.data[p] = T(1) / (depth.data[p] + eps);
    const T tv_color = total_variation(color, d_color, scale);
    if (!d_depth) return tv_color + total_variation(inv);
    Raster<T> d_inv(depth.width, depth.height, 1);
    const T tv_depth = total_variation(inv, &d_inv, scale);
    for (std::size_t p = 0; p < inv.data.size(); ++p) d_depth->data[p] -= d_inv.data[p] * inv.data[p] * inv.data[p];
    return tv_color + tv_depth;
}

template <typename T> T loss_temporal_tv(HexPlaneField<T>& field, bool accumulate_grads, T scale) {
    T total = 0;
    for (int level = 0; level < field.config().levels; ++level) {
        for (int p : {HexPlaneField<T>::XT, HexPlaneField<T>::YT, HexPlaneField<T>::ZT}) {
            auto& plane = field.plane(level, p);
            const std::size_t count =
                static_cast<std::size_t>(plane.res_a) * static_cast<std::size_t>(plane.res_b - 1) * plane.channels;
            if (count == 0) continue;
            const T norm = T(1) / static_cast<T>(count);
            T sum = 0;
            for (int j = 0; j + 1 < plane.res_b; ++j)
                for (int i = 0; i < plane.res_a; ++i) {
                    const std::size_t a = plane.node_offset(i, j), b = plane.node_offset(i, j + 1);
                    for (int c = 0; c < plane.channels; ++c) {
                        const T diff = plane.values[b + c] - plane.values[a + c];
                        sum += diff * diff;
                        if (accumulate_grads) {
                            const T g = scale * norm * T(2) * diff;
                            plane.grads[b + c] += g;
                            plane.grads[a + c] -= g;
                        }
                    }
                }
            total += sum * norm;
        }
    }
    return total;
}

LossWeights LossWeights::defaults(DepthMode mode) {
    LossWeights w;
    w.depth_mode = mode;
    w.depth = mode == DepthMode::Monocular ? 0.1 : 1.0;
    return w;
}

void LossWeights::validate() const {
    for (double v : {color, depth, spatial_tv, temporal_tv})
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and non-negative");
}

std::string LossReport::csv_header() { return "iter,color,depth,spatial_tv,temporal_tv,total"; }

std::string LossReport::csv_row(long iteration) const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g", iteration, terms.color, terms.depth,
                  terms.spatial_tv, terms.temporal_tv, total);
    return buf;
}

LossReport total_loss(const LossTerms& terms, const LossWeights& weights) {
    weights.validate();
    LossReport r;
    r.terms = terms;
    r.total = weights.color * terms.color + weights.depth * terms.depth + weights.spatial_tv * terms.spatial_tv +
              weights.temporal_tv * terms.temporal_tv;
    return r;
}

#define DYNSPLAT_INSTANTIATE_LOSSES(T)                                                                               \
    template LossValue<T> loss_color(const Raster<T>&, const Raster<T>&, const Raster<std::uint8_t>&, Raster<T>*, T); \
    template LossValue<T> loss_depth_binocular(const Raster<T>&, const Raster<T>&, const Raster<std::uint8_t>&,      \
                                               Raster<T>*, T);                                                      \
    template LossValue<T> loss_depth_monocular(const Raster<T>&, const Raster<T>&, const Raster<std::uint8_t>&,      \
                                               Raster<T>*, T);                                                      \
    template T total_variation(const Raster<T>&, Raster<T>*, T);                                                     \
    template T loss_spatial_tv(const Raster<T>&, const Raster<T>&, Raster<T>*, Raster<T>*, T);                       \
    template T loss_temporal_tv(HexPlaneField<T>&, bool, T);

DYNSPLAT_INSTANTIATE_LOSSES(float)
DYNSPLAT_INSTANTIATE_LOSSES(double)

} // namespace dynsplat
