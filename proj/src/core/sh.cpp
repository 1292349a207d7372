#include "dynsplat/core/sh.hpp"

#include <string>

namespace dynsplat {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277, -0.5900435899266435};

void check_layout(std::size_t size, int degree) {
    if (degree < 0 || degree > kMaxShDegree)
        throw ConfigError("SH degree must be in [0, 3], got " + std::to_string(degree));
    const auto expected = static_cast<std::size_t>(3 * sh_coeff_count(degree));
    if (size != expected)
        throw ConfigError("SH coefficient count " + std::to_string(size) + " does not match degree " +
                          std::to_string(degree) + " (expected " + std::to_string(expected) + ")");
}

} // namespace

template <typename T> ShBasis<T> evaluate_sh_basis(int degree, const Vec3<T>& dir, bool with_gradient) {
    ShBasis<T> out;
    out.degree = degree;
    auto& v = out.value;
    auto& g = out.gradient;
    const T x = dir.x(), y = dir.y(), z = dir.z();

    v[0] = T(kShC0);
    if (with_gradient) g[0].setZero();
    if (degree < 1) return out;

    const T c1 = T(kC1);
    v[1] = -c1 * y;
    v[2] = c1 * z;
    v[3] = -c1 * x;
    if (with_gradient) {
        g[1] = Vec3<T>(0, -c1, 0);
        g[2] = Vec3<T>(0, 0, c1);
        g[3] = Vec3<T>(-c1, 0, 0);
    }
    if (degree < 2) return out;

    const T xx = x * x, yy = y * y, zz = z * z;
    const T xy = x * y, yz = y * z, xz = x * z;
    const T c20 = T(kC2[0]), c21 = T(kC2[1]), c22 = T(kC2[2]), c23 = T(kC2[3]), c24 = T(kC2[4]);
    v[4] = c20 * xy;
    v[5] = c21 * yz;
    v[6] = c22 * (T(2) * zz - xx - yy);
    v[7] = c23 * xz;
    v[8] = c24 * (xx - yy);
    if (with_gradient) {
        g[4] = Vec3<T>(c20 * y, c20 * x, 0);
        g[5] = Vec3<T>(0, c21 * z, c21 * y);
        g[6] = Vec3<T>(T(-2) * c22 * x, T(-2) * c22 * y, T(4) * c22 * z);
        g[7] = Vec3<T>(c23 * z, 0, c23 * x);
        g[8] = Vec3<T>(T(2) * c24 * x, T(-2) * c24 * y, 0);
    }
    if (degree < 3) return out;

    const T c30 = T(kC3[0]), c31 = T(kC3[1]), c32 = T(kC3[2]), c33 = T(kC3[3]), c34 = T(kC3[4]), c35 = T(kC3[5]),
            c36 = T(kC3[6]);
    v[9] = c30 * y * (T(3) * xx - yy);
    v[10] = c31 * xy * z;
    v[11] = c32 * y * (T(4) * zz - xx - yy);
    v[12] = c33 * z * (T(2) * zz - T(3) * xx - T(3) * yy);
    v[13] = c34 * x * (T(4) * zz - xx - yy);
    v[14] = c35 * z * (xx - yy);
    v[15] = c36 * x * (xx - T(3) * yy);
    if (with_gradient) {
        g[9] = Vec3<T>(T(6) * c30 * xy, c30 * (T(3) * xx - T(3) * yy), 0);
        g[10] = Vec3<T>(c31 * yz, c31 * xz, c31 * xy);
        g[11] = Vec3<T>(T(-2) * c32 * xy, c32 * (T(4) * zz - xx - T(3) * yy), T(8) * c32 * yz);
        g[12] = Vec3<T>(T(-6) * c33 * xz, T(-6) * c33 * yz, c33 * (T(6) * zz - T(3) * xx - T(3) * yy));
        g[13] = Vec3<T>(c34 * (T(4) * zz - T(3) * xx - yy), T(-2) * c34 * xy, T(8) * c34 * xz);
        g[14] = Vec3<T>(T(2) * c35 * xz, T(-2) * c35 * yz, c35 * (xx - yy));
        g[15] = Vec3<T>(c36 * (T(3) * xx - T(3) * yy), T(-6) * c36 * xy, 0);
    }
    return out;
}

template <typename T> ShColor<T> eval_sh(std::span<const T> coeffs, const Vec3<T>& view_dir, int degree) {
    check_layout(coeffs.size(), degree);
    const auto basis = evaluate_sh_basis(degree, view_dir, false);
    ShColor<T> out;
    Vec3<T> raw = Vec3<T>::Constant(T(kShColorOffset));
    const int count = sh_coeff_count(degree);
    for (int b = 0; b < count; ++b) {
        for (int c = 0; c < 3; ++c) raw[c] += basis.value[b] * coeffs[3 * b + c];
    }
    for (int c = 0; c < 3; ++c) {
        out.clamped[c] = raw[c] < T(0);
        out.rgb[c] = out.clamped[c] ? T(0) : raw[c];
    }
    return out;
}

template <typename T>
Vec3<T> eval_sh_backward(std::span<const T> coeffs, const Vec3<T>& view_dir, int degree, const ShColor<T>& forward,
                         const Vec3<T>& d_rgb, std::span<T> d_coeffs) {
    check_layout(coeffs.size(), degree);
    check_layout(d_coeffs.size(), degree);
    Vec3<T> d_raw = d_rgb;
    for (int c = 0; c < 3; ++c) {
        if (forward.clamped[c]) d_raw[c] = T(0);
    }
    const auto basis = evaluate_sh_basis(degree, view_dir, degree > 0);
    Vec3<T> d_dir = Vec3<T>::Zero();
    const int count = sh_coeff_count(degree);
    for (int b = 0; b < count; ++b) {
        T weighted = 0;
        for (int c = 0; c < 3; ++c) {
            d_coeffs[3 * b + c] += basis.value[b] * d_raw[c];
            weighted += coeffs[3 * b + c] * d_raw[c];
        }
        if (b > 0) d_dir += weighted * basis.gradient[b];
    }
    return d_dir;
}

template ShBasis<float> evaluate_sh_basis(int, const Vec3<float>&, bool);
template ShBasis<double> evaluate_sh_basis(int, const Vec3<double>&, bool);
template ShColor<float> eval_sh(std::span<const float>, const Vec3<float>&, int);
template ShColor<double> eval_sh(std::span<const double>, const Vec3<double>&, int);
template Vec3<float> eval_sh_backward(std::span<const float>, const Vec3<float>&, int, const ShColor<float>&,
                                      const Vec3<float>&, std::span<float>);
template Vec3<double> eval_sh_backward(std::span<const double>, const Vec3<double>&, int, const ShColor<double>&,
                                       const Vec3<double>&, std::span<double>);

} // namespace dynsplat
