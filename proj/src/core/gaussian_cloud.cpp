#include "dynsplat/core/gaussian_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dynsplat {

template <typename T> void GaussianCloud<T>::resize(std::size_t count, int degree) {
    if (degree < 0 || degree > kMaxShDegree) throw ConfigError("SH degree must be in [0, 3]");
    sh_degree = degree;
    positions.assign(3 * count, T(0));
    rotations.assign(4 * count, T(0));
    log_scales.assign(3 * count, T(0));
    opacity_logits.assign(count, T(0));
    sh_coeffs.assign(3 * static_cast<std::size_t>(sh_coeff_count(degree)) * count, T(0));
}

template <typename T> void GaussianCloud<T>::set_zero() {
    std::fill(positions.begin(), positions.end(), T(0));
    std::fill(rotations.begin(), rotations.end(), T(0));
    std::fill(log_scales.begin(), log_scales.end(), T(0));
    std::fill(opacity_logits.begin(), opacity_logits.end(), T(0));
    std::fill(sh_coeffs.begin(), sh_coeffs.end(), T(0));
}

template <typename T> void GaussianCloud<T>::normalize_rotations() {
    for (std::size_t i = 0; i < size(); ++i) {
        auto q = rotation(i);
        const T n = q.norm();
        if (n > T(0)) q /= n;
        else q = Vec4<T>(1, 0, 0, 0);
    }
}

template <typename T> void GaussianCloud<T>::validate() const {
    const std::size_t n = size();
    if (n == 0) throw ConfigError("Gaussian cloud is empty");
    if (positions.size() != 3 * n || rotations.size() != 4 * n || log_scales.size() != 3 * n ||
        sh_coeffs.size() != 3 * static_cast<std::size_t>(coeffs_per_gaussian()) * n)
        throw ConfigError("Gaussian cloud attribute arrays have inconsistent sizes");
    auto finite = [](const std::vector<T>& v) {
        return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
    };
    if (!finite(positions) || !finite(rotations) || !finite(log_scales) || !finite(opacity_logits) ||
        !finite(sh_coeffs))
        throw ConfigError("Gaussian cloud contains non-finite values");
}

template <typename T> std::vector<ParamBlock<T>> GaussianCloud<T>::parameter_blocks(GaussianCloud& grads) {
    const auto b = static_cast<std::size_t>(3 * coeffs_per_gaussian());
    return {
        {"gaussians.positions", positions, grads.positions, 3},
        {"gaussians.rotations", rotations, grads.rotations, 4},
        {"gaussians.log_scales", log_scales, grads.log_scales, 3},
        {"gaussians.opacity_logits", opacity_logits, grads.opacity_logits, 1},
        {"gaussians.sh_coeffs", sh_coeffs, grads.sh_coeffs, b},
    };
}

namespace {

template <typename T> void filter_items(std::vector<T>& v, std::size_t width, const std::vector<bool>& keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        if (out != i) std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * width), width,
                                  v.begin() + static_cast<std::ptrdiff_t>(out * width));
        ++out;
    }
    v.resize(out * width);
}

template <typename T> void append_item(std::vector<T>& dst, const std::vector<T>& src, std::size_t width, std::size_t i) {
    dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(i * width),
               src.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
}

} // namespace

template <typename T> void GaussianCloud<T>::filter(const std::vector<bool>& keep) {
    if (keep.size() != size()) throw ConfigError("filter mask size does not match cloud size");
    filter_items(positions, 3, keep);
    filter_items(rotations, 4, keep);
    filter_items(log_scales, 3, keep);
    filter_items(opacity_logits, 1, keep);
    filter_items(sh_coeffs, static_cast<std::size_t>(3 * coeffs_per_gaussian()), keep);
}

template <typename T> void GaussianCloud<T>::append_from(const GaussianCloud& other, std::size_t i) {
    if (other.sh_degree != sh_degree) throw ConfigError("cannot append Gaussians of a different SH degree");
    append_item(positions, other.positions, 3, i);
    append_item(rotations, other.rotations, 4, i);
    append_item(log_scales, other.log_scales, 3, i);
    append_item(opacity_logits, other.opacity_logits, 1, i);
    append_item(sh_coeffs, other.sh_coeffs, static_cast<std::size_t>(3 * coeffs_per_gaussian()), i);
}

template struct GaussianCloud<float>;
template struct GaussianCloud<double>;

} // namespace dynsplat
