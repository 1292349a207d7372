#pragma once

#include "dynsplat/core/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dynsplat {

struct HexPlaneConfig {
    int levels = 2;
    /// Nodes per spatial axis at level 0; multiplied by spatial_growth per level.
    int base_spatial = 32;
    /// Nodes along the time axis at level 0.
    int base_temporal = 16;
    int spatial_growth = 2;
    /// Time resolution multiplier per level (1 keeps it fixed).
    int temporal_growth = 1;
    int channels = 16;
    double init_low = 0.1;
    double init_high = 0.5;

    int spatial_resolution(int level) const;
    int temporal_resolution(int level) const;
    void validate() const;
};

/// A 2D grid of `channels`-wide features over two of the axes (x, y, z, t).
/// Node (i, j) along (axis_a, axis_b) sits at normalized coordinate
/// (i / (res_a - 1), j / (res_b - 1)).
template <typename T> struct FeaturePlane {
    int axis_a = 0;
    int axis_b = 1;
    int res_a = 2;
    int res_b = 2;
    int channels = 1;
    std::vector<T> values;
    std::vector<T> grads;

    std::size_t node_offset(int i, int j) const {
        return (static_cast<std::size_t>(j) * res_a + static_cast<std::size_t>(i)) * channels;
    }
    bool is_temporal() const { return axis_b == 3; }
    std::size_t size() const { return values.size(); }
};

/// Per-query interpolation footprint on one plane.
template <typename T> struct BilinearTap {
    int i0 = 0, j0 = 0;
    T wa = 0, wb = 0;
};

/// Bilinear footprint of normalized coordinates (ua, ub) in [0, 1]^2.
template <typename T> BilinearTap<T> bilinear_tap(const FeaturePlane<T>& plane, T ua, T ub);

/// Interpolated feature at a tap, written to out[0..channels).
template <typename T> void sample_plane(const FeaturePlane<T>& plane, const BilinearTap<T>& tap, T* out);

/// What HexPlaneField::encode keeps for backward.
template <typename T> struct HexPlaneCache {
    std::size_t count = 0;
    /// Normalized (x, y, z, t) per query, 4 x N.
    MatX<T> coords;
    /// Per query and axis: 1 when the coordinate was clamped to the box.
    std::vector<std::array<bool, 4>> clamped;
    /// Plane samples, (levels * 6 * channels) x N.
    MatX<T> samples;
};

/// Multi-resolution six-plane factorization of a 4D feature volume. The
/// latent feature of a level is
///   v1 * (XY . ZT) + v2 * (XZ . YT) + v3 * (YZ . XT)
/// with all products elementwise over channels; levels are concatenated.
template <typename T> class HexPlaneField {
public:
    /// Plane order inside a level.
    enum PlaneIndex { XY = 0, XZ = 1, YZ = 2, XT = 3, YT = 4, ZT = 5 };
    static constexpr std::array<std::array<int, 2>, 6> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};
    static constexpr std::array<const char*, 6> kPlaneNames{"xy", "xz", "yz", "xt", "yt", "zt"};
    /// Pairs multiplied together: (XY, ZT), (XZ, YT), (YZ, XT).
    static constexpr std::array<std::array<int, 2>, 3> kProducts{{{XY, ZT}, {XZ, YT}, {YZ, XT}}};

    HexPlaneField() = default;
    HexPlaneField(const HexPlaneConfig& config, const BoundingBox& bounds, std::uint64_t seed);

    const HexPlaneConfig& config() const { return config_; }
    const BoundingBox& bounds() const { return bounds_; }
    int feature_dim() const { return config_.levels * config_.channels; }

    FeaturePlane<T>& plane(int level, int index) { return planes_[static_cast<std::size_t>(6 * level + index)]; }
    const FeaturePlane<T>& plane(int level, int index) const {
        return planes_[static_cast<std::size_t>(6 * level + index)];
    }
    /// Mixing vectors of a level, 3 x channels, row k weights product k.
    std::vector<T>& mix(int level) { return mix_[static_cast<std::size_t>(level)]; }
    const std::vector<T>& mix(int level) const { return mix_[static_cast<std::size_t>(level)]; }
    std::vector<T>& mix_grad(int level) { return mix_grads_[static_cast<std::size_t>(level)]; }

    std::size_t parameter_count() const;
    /// Parameters held by the XY, XZ and YZ planes only.
    std::size_t spatial_plane_parameter_count() const;
    /// Closed-form count: sum over levels of (3 rs^2 + 3 rs rt) * C + 3 C.
    static std::size_t expected_parameter_count(const HexPlaneConfig& config);

    /// Normalized coordinate of a world position and time; clamps to [0, 1]
    /// and records which axes were clamped.
    Vec4<T> normalize(const Vec3<T>& position, T t, std::array<bool, 4>* clamped = nullptr) const;

    /// Latent features (feature_dim x N) for N positions (N x 3, flat) at time t.
    MatX<T> encode(std::span<const T> positions, T t, HexPlaneCache<T>* cache = nullptr,
                   const ExecPolicy& exec = {}) const;
    /// Single query; returns the concatenated feature.
    VecX<T> query(const Vec3<T>& position, T t) const;

    /// Accumulates plane and mixing-vector gradients from dL/dfeatures and adds
    /// dL/dposition (N x 3, flat) through the interpolation weights.
    void backward(const HexPlaneCache<T>& cache, const MatX<T>& d_features, std::span<T> d_positions,
                  const ExecPolicy& exec = {});

    void zero_grad();
    std::vector<ParamBlock<T>> parameter_blocks();

    /// Queries whose time fell outside [0, 1] and was clamped.
    std::uint64_t clamped_time_queries() const { return clamped_time_; }

private:
    HexPlaneConfig config_;
    BoundingBox bounds_;
    std::vector<FeaturePlane<T>> planes_;
    std::vector<std::vector<T>> mix_;
    std::vector<std::vector<T>> mix_grads_;
    mutable std::uint64_t clamped_time_ = 0;
};

} // namespace dynsplat
