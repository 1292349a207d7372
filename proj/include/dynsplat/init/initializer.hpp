#pragma once

#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/core/types.hpp"
#include "dynsplat/init/frame.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace dynsplat {

class InitializationError : public Error {
public:
    using Error::Error;
};

/// Colored world-space points.
struct PointCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3f> colors;
    /// Source (frame index, pixel x, pixel y) of every point; empty for
    /// clouds that were not produced by reprojection.
    std::vector<std::array<int, 3>> sources;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
    BoundingBox bounds() const;
};

struct GaussianInitOptions {
    int sh_degree = 3;
    double initial_opacity = 0.1;
    /// Isotropic log-scale used when fewer than 4 points exist.
    double fallback_log_scale = -4.605170185988091; // ln(0.01)
};

/// Back-projects every kept pixel with positive depth into world space:
/// X = T * (d * K^-1 (u, v, 1)). Returns nullopt (and logs a warning) when the
/// frame has no usable pixel.
std::optional<PointCloud> reproject_frame(const FrameRecord& frame);

/// reproject_frame over a sequence, parallel across frames. Skipped frames
/// are omitted; the result keeps sequence order.
std::vector<PointCloud> reproject_frames(const std::vector<FrameRecord>& frames, const ExecPolicy& exec = {});

/// Number of points kept by combine_holistic: ceil(keep_fraction * total).
std::size_t holistic_keep_count(std::size_t total, double keep_fraction);

/// Concatenates the per-frame clouds and keeps a seeded uniform random subset
/// of ceil(keep_fraction * total) points, in concatenation order.
PointCloud combine_holistic(const std::vector<PointCloud>& clouds, double keep_fraction, std::uint64_t seed);

/// Mean distance from each point to its 3 nearest neighbours (k-d tree).
/// Requires at least 4 points.
std::vector<double> mean_neighbor_distance(const std::vector<Eigen::Vector3d>& points, int k = 3);

/// Gaussians centred on the points: isotropic log-scale from the 3-NN mean
/// distance, identity rotation, opacity logit(initial_opacity), band-0 SH
/// reproducing the point color and higher bands zero.
template <typename T> GaussianCloud<T> instantiate_gaussians(const PointCloud& points, const GaussianInitOptions& options = {});

/// Uniformly distributed gray Gaussians inside `bounds` (ablation baseline).
template <typename T>
GaussianCloud<T> random_init(std::size_t count, const BoundingBox& bounds, std::uint64_t seed,
                             const GaussianInitOptions& options = {});

} // namespace dynsplat
