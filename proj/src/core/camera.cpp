#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/parallel.hpp"

#include <cmath>
#include <sstream>

namespace dynsplat {

int default_thread_count() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

template <typename T> Mat3<T> Camera<T>::intrinsics() const {
    Mat3<T> k = Mat3<T>::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
}

template <typename T> Mat4<T> Camera<T>::world_to_camera() const {
    Mat4<T> w = Mat4<T>::Identity();
    w.template topLeftCorner<3, 3>() = rotation_world_to_camera();
    w.template topRightCorner<3, 1>() = translation_world_to_camera();
    return w;
}

template <typename T> void Camera<T>::validate() const {
    std::ostringstream err;
    if (!(fx > 0) || !(fy > 0)) err << "focal lengths must be positive (fx=" << fx << ", fy=" << fy << "); ";
    if (width < 1 || height < 1) err << "image size must be positive; ";
    if (!(near_plane > 0) || !(near_plane < far_plane)) err << "clip planes require 0 < near < far; ";
    const Mat3<T> r = camera_to_world.template topLeftCorner<3, 3>();
    const T tol = sizeof(T) == 4 ? T(1e-4) : T(1e-9);
    if ((r.transpose() * r - Mat3<T>::Identity()).cwiseAbs().maxCoeff() > tol || std::abs(r.determinant() - T(1)) > tol)
        err << "camera_to_world rotation is not orthonormal with det +1; ";
    if (!camera_to_world.allFinite()) err << "camera_to_world contains non-finite values; ";
    const std::string msg = err.str();
    if (!msg.empty()) throw ConfigError("invalid camera: " + msg);
}

template struct Camera<float>;
template struct Camera<double>;

} // namespace dynsplat
