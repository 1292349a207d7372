#pragma once

#include "dynsplat/core/types.hpp"

#include <cmath>

namespace dynsplat {

template <typename T> T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }
template <typename T> T logit(T p) { return std::log(p / (T(1) - p)); }

/// Quaternion stored as (w, x, y, z).
template <typename T> Vec4<T> normalize_quaternion(const Vec4<T>& q) { return q / q.norm(); }

/// Backward of q / |q|.
template <typename T> Vec4<T> normalize_quaternion_backward(const Vec4<T>& q, const Vec4<T>& d_unit) {
    const T n = q.norm();
    const Vec4<T> u = q / n;
    return (d_unit - u * u.dot(d_unit)) / n;
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
template <typename T> Mat3<T> quaternion_to_rotation(const Vec4<T>& q) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<T> r;
    r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
        T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
        T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
    return r;
}

/// Gradient with respect to the (unit) quaternion components given dL/dR.
template <typename T> Vec4<T> quaternion_to_rotation_backward(const Vec4<T>& q, const Mat3<T>& g) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4<T> d;
    d[0] = T(2) * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = T(2) * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - T(2) * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                   w * g(2, 1) - T(2) * x * g(2, 2));
    d[2] = T(2) * (-T(2) * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                   z * g(2, 1) - T(2) * y * g(2, 2));
    d[3] = T(2) * (-T(2) * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - T(2) * z * g(1, 1) +
                   y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Hamilton product a * b.
template <typename T> Vec4<T> quaternion_multiply(const Vec4<T>& a, const Vec4<T>& b) {
    return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

/// World-space covariance R S S^T R^T with S = diag(exp(log_scale)). The
/// quaternion is normalized before use.
template <typename T> Mat3<T> build_covariance(const Vec4<T>& q, const Vec3<T>& log_scale) {
    const Mat3<T> m = quaternion_to_rotation(normalize_quaternion(q)) * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

/// Gradients of build_covariance with respect to the raw quaternion and the
/// log-scales, given a symmetric dL/dSigma.
template <typename T> struct CovarianceGrad {
    Vec4<T> d_quaternion;
    Vec3<T> d_log_scale;
};

template <typename T>
CovarianceGrad<T> build_covariance_backward(const Vec4<T>& q, const Vec3<T>& log_scale, const Mat3<T>& d_sigma) {
    const Vec4<T> unit = normalize_quaternion(q);
    const Mat3<T> r = quaternion_to_rotation(unit);
    const Vec3<T> s = log_scale.array().exp();
    const Mat3<T> m = r * s.asDiagonal();
    // Sigma = M M^T, dL/dM = (G + G^T) M.
    const Mat3<T> d_m = (d_sigma + d_sigma.transpose()) * m;
    CovarianceGrad<T> out;
    const Mat3<T> d_r = d_m * s.asDiagonal();
    for (int j = 0; j < 3; ++j) out.d_log_scale[j] = d_m.col(j).dot(r.col(j)) * s[j];
    out.d_quaternion = normalize_quaternion_backward(q, quaternion_to_rotation_backward(unit, d_r));
    return out;
}

/// exp(-1/2 dx^T cov^-1 dx) for a 2D covariance. The caller guarantees
/// det(cov) > 0.
template <typename T> T gaussian_weight(const Mat2<T>& cov, const Vec2<T>& dx) {
    const T det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    const T a = cov(1, 1) / det, b = -cov(0, 1) / det, c = cov(0, 0) / det;
    return std::exp(T(-0.5) * (a * dx.x() * dx.x() + T(2) * b * dx.x() * dx.y() + c * dx.y() * dx.y()));
}

} // namespace dynsplat
