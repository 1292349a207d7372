#pragma once

#include "dynsplat/core/types.hpp"

#include <array>
#include <span>

namespace dynsplat {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);

/// Real spherical-harmonics band-0 constant, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;

/// Offset added to the basis contraction so that zero coefficients give
/// mid-gray.
inline constexpr double kShColorOffset = 0.5;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH basis up to `degree` at direction (x, y, z). Values are written for
/// the first sh_coeff_count(degree) entries.
template <typename T> struct ShBasis {
    int degree = 0;
    std::array<T, kMaxShCoeffs> value{};
    /// d value[b] / d(x, y, z), treating the direction components as
    /// independent.
    std::array<Vec3<T>, kMaxShCoeffs> gradient{};
};

template <typename T> ShBasis<T> evaluate_sh_basis(int degree, const Vec3<T>& dir, bool with_gradient = false);

/// SH color result plus the information needed to differentiate it.
template <typename T> struct ShColor {
    Vec3<T> rgb = Vec3<T>::Zero();
    /// True where the +0.5-shifted value was clamped to zero.
    std::array<bool, 3> clamped{false, false, false};
};

/// Color from `coeffs` laid out as [band][channel] (B x 3, row-major):
/// rgb = max(sum_b basis_b(dir) * coeff_b + 0.5, 0).
/// Throws ConfigError if coeffs.size() != 3 * (degree + 1)^2.
template <typename T> ShColor<T> eval_sh(std::span<const T> coeffs, const Vec3<T>& view_dir, int degree);

/// Backward of eval_sh. Accumulates into `d_coeffs` (B x 3) and returns the
/// gradient with respect to the (unit) view direction.
template <typename T>
Vec3<T> eval_sh_backward(std::span<const T> coeffs, const Vec3<T>& view_dir, int degree, const ShColor<T>& forward,
                         const Vec3<T>& d_rgb, std::span<T> d_coeffs);

/// Band-0 coefficient reproducing `rgb` under the eval_sh convention.
template <typename T> Vec3<T> rgb_to_sh0(const Vec3<T>& rgb) {
    return (rgb.array() - T(kShColorOffset)) / T(kShC0);
}

} // namespace dynsplat
