#pragma once

#include "dynsplat/core/types.hpp"

namespace dynsplat {

/// Pinhole camera. Pixel (u, v) is sampled at image coordinate (u, v), so the
/// principal point maps to pixel (cx, cy) exactly.
template <typename T> struct Camera {
    T fx = 1, fy = 1, cx = 0, cy = 0;
    /// Rigid camera-to-world transform.
    Mat4<T> camera_to_world = Mat4<T>::Identity();
    int width = 1;
    int height = 1;
    T near_plane = T(0.01);
    T far_plane = T(100);

    Mat3<T> intrinsics() const;
    Mat3<T> rotation_world_to_camera() const { return camera_to_world.template topLeftCorner<3, 3>().transpose(); }
    Vec3<T> translation_world_to_camera() const {
        return -rotation_world_to_camera() * camera_to_world.template topRightCorner<3, 1>();
    }
    Mat4<T> world_to_camera() const;
    Vec3<T> center() const { return camera_to_world.template topRightCorner<3, 1>(); }

    Vec3<T> to_camera(const Vec3<T>& world) const {
        return rotation_world_to_camera() * world + translation_world_to_camera();
    }
    Vec3<T> to_world(const Vec3<T>& cam) const {
        return camera_to_world.template topLeftCorner<3, 3>() * cam + center();
    }
    /// Image-plane projection of a camera-space point (z must be non-zero).
    Vec2<T> project_camera_point(const Vec3<T>& cam) const {
        return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
    }

    /// Throws ConfigError if focal lengths, clip planes, image size or the
    /// rotation block are invalid.
    void validate() const;

    template <typename U> Camera<U> cast() const {
        Camera<U> c;
        c.fx = static_cast<U>(fx);
        c.fy = static_cast<U>(fy);
        c.cx = static_cast<U>(cx);
        c.cy = static_cast<U>(cy);
        c.camera_to_world = camera_to_world.template cast<U>();
        c.width = width;
        c.height = height;
        c.near_plane = static_cast<U>(near_plane);
        c.far_plane = static_cast<U>(far_plane);
        return c;
    }
};

} // namespace dynsplat
