#pragma once

#include "dynsplat/core/sh.hpp"
#include "dynsplat/core/types.hpp"

#include <cstddef>
#include <vector>

namespace dynsplat {

/// Per-Gaussian optimizable attributes in their unconstrained storage form.
/// The same container doubles as the gradient buffer for a cloud of equal
/// size.
///
/// - positions:      N x 3 world coordinates
/// - rotations:      N x 4 raw quaternions (w, x, y, z), normalized on use
/// - log_scales:     N x 3, activation exp
/// - opacity_logits: N,     activation sigmoid
/// - sh_coeffs:      N x B x 3 with B = (sh_degree + 1)^2
template <typename T> struct GaussianCloud {
    int sh_degree = 3;
    std::vector<T> positions;
    std::vector<T> rotations;
    std::vector<T> log_scales;
    std::vector<T> opacity_logits;
    std::vector<T> sh_coeffs;

    GaussianCloud() = default;
    GaussianCloud(std::size_t count, int degree) { resize(count, degree); }

    std::size_t size() const { return opacity_logits.size(); }
    bool empty() const { return opacity_logits.empty(); }
    int coeffs_per_gaussian() const { return sh_coeff_count(sh_degree); }

    /// Resizes every attribute array; new entries are zero.
    void resize(std::size_t count, int degree);
    GaussianCloud zeros_like() const { return GaussianCloud(size(), sh_degree); }
    void set_zero();

    Eigen::Map<Vec3<T>> position(std::size_t i) { return Eigen::Map<Vec3<T>>(positions.data() + 3 * i); }
    Eigen::Map<const Vec3<T>> position(std::size_t i) const {
        return Eigen::Map<const Vec3<T>>(positions.data() + 3 * i);
    }
    Eigen::Map<Vec4<T>> rotation(std::size_t i) { return Eigen::Map<Vec4<T>>(rotations.data() + 4 * i); }
    Eigen::Map<const Vec4<T>> rotation(std::size_t i) const {
        return Eigen::Map<const Vec4<T>>(rotations.data() + 4 * i);
    }
    Eigen::Map<Vec3<T>> log_scale(std::size_t i) { return Eigen::Map<Vec3<T>>(log_scales.data() + 3 * i); }
    Eigen::Map<const Vec3<T>> log_scale(std::size_t i) const {
        return Eigen::Map<const Vec3<T>>(log_scales.data() + 3 * i);
    }
    std::span<T> sh(std::size_t i) {
        const auto n = static_cast<std::size_t>(3 * coeffs_per_gaussian());
        return std::span<T>(sh_coeffs.data() + n * i, n);
    }
    std::span<const T> sh(std::size_t i) const {
        const auto n = static_cast<std::size_t>(3 * coeffs_per_gaussian());
        return std::span<const T>(sh_coeffs.data() + n * i, n);
    }

    /// Rescales every quaternion to unit length.
    void normalize_rotations();

    /// Throws ConfigError when array sizes disagree, N == 0 or values are
    /// non-finite.
    void validate() const;

    /// Parameter blocks backed by `this` (values) and `grads` (gradients).
    std::vector<ParamBlock<T>> parameter_blocks(GaussianCloud& grads);

    /// Keeps the Gaussians whose index has keep[i] == true.
    void filter(const std::vector<bool>& keep);
    /// Appends a copy of Gaussian `i` from `other`.
    void append_from(const GaussianCloud& other, std::size_t i);

    template <typename U> GaussianCloud<U> cast() const {
        GaussianCloud<U> out;
        out.sh_degree = sh_degree;
        out.positions.assign(positions.begin(), positions.end());
        out.rotations.assign(rotations.begin(), rotations.end());
        out.log_scales.assign(log_scales.begin(), log_scales.end());
        out.opacity_logits.assign(opacity_logits.begin(), opacity_logits.end());
        out.sh_coeffs.assign(sh_coeffs.begin(), sh_coeffs.end());
        return out;
    }
};

} // namespace dynsplat
