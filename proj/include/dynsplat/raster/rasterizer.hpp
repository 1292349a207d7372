#pragma once

#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/core/image.hpp"
#include "dynsplat/core/sh.hpp"
#include "dynsplat/core/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace dynsplat {

struct RasterConfig {
    int tile_size = 16;
    /// Added to both diagonal entries of the projected covariance (pixels^2).
    double dilation = 0.3;
    /// Contributions with alpha below this are skipped. Zero disables the
    /// cutoff and makes every Gaussian's footprint unbounded.
    double alpha_cutoff = 1.0 / 255.0;
    double max_alpha = 0.99;
    /// Blending stops before a contributor that would push transmittance
    /// below this value. Zero disables early termination.
    double stop_transmittance = 1e-4;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    ExecPolicy exec;

    void validate() const;
};

/// A Gaussian after perspective projection (EWA splat) for one camera.
template <typename T> struct ProjectedGaussian {
    Vec2<T> mean2d = Vec2<T>::Zero();
    /// Screen-space covariance including the low-pass dilation.
    Mat2<T> cov2d = Mat2<T>::Identity();
    /// Inverse of cov2d stored as (a, b, c) for [[a, b], [b, c]].
    Vec3<T> conic = Vec3<T>::Zero();
    T depth = 0;
    Vec3<T> color = Vec3<T>::Zero();
    T opacity = 0;
    int gaussian_id = -1;
    /// Inclusive pixel rectangle outside which alpha is below the cutoff.
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
    std::array<bool, 3> color_clamped{false, false, false};

    bool covers(int x, int y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
};

template <typename T> struct RenderOutput {
    Raster<T> color;            ///< H x W x 3
    Raster<T> depth;            ///< H x W, sum_i d_i w_i (not normalized)
    Raster<T> alpha;            ///< H x W, 1 - final transmittance
    Raster<T> normalized_depth; ///< H x W, depth / alpha where alpha > 0 (diagnostic)
    Raster<int> contributors;   ///< H x W, number of blended Gaussians
};

/// Everything the backward pass needs from a forward pass.
template <typename T> struct RenderState {
    int width = 0;
    int height = 0;
    std::size_t cloud_size = 0;
    RasterConfig config;
    std::vector<ProjectedGaussian<T>> projected;
    int tiles_x = 0;
    int tiles_y = 0;
    /// Per tile [begin, end) into `tile_entries` (indices into `projected`),
    /// sorted front-to-back.
    std::vector<std::uint32_t> tile_offsets;
    std::vector<std::uint32_t> tile_entries;
    std::vector<T> final_transmittance;
    /// Per pixel, one past the last tile entry visited by the forward walk.
    std::vector<std::uint32_t> walk_end;
};

/// dL/d(projected attributes) for one entry of RenderState::projected.
template <typename T> struct ProjectedGrad {
    Vec2<T> d_mean2d = Vec2<T>::Zero();
    Vec3<T> d_conic = Vec3<T>::Zero();
    T d_depth = 0;
    Vec3<T> d_color = Vec3<T>::Zero();
    T d_opacity = 0;

    ProjectedGrad& operator+=(const ProjectedGrad& o) {
        d_mean2d += o.d_mean2d;
        d_conic += o.d_conic;
        d_depth += o.d_depth;
        d_color += o.d_color;
        d_opacity += o.d_opacity;
        return *this;
    }
};

/// Projects every Gaussian through the camera. Gaussians with camera depth
/// outside (near, far), a degenerate footprint, opacity below the cutoff or a
/// footprint entirely off-screen are culled.
template <typename T>
std::vector<ProjectedGaussian<T>> project(const GaussianCloud<T>& cloud, const Camera<T>& camera,
                                          const RasterConfig& config);

/// Tile-based front-to-back alpha blending of color and depth. When `state`
/// is non-null it receives what render_backward needs.
template <typename T>
RenderOutput<T> render(const std::vector<ProjectedGaussian<T>>& projected, const Camera<T>& camera,
                       const RasterConfig& config, RenderState<T>* state = nullptr);

/// Reference renderer: every pixel blends every Gaussian in global depth
/// order, without tiles or early termination.
template <typename T>
RenderOutput<T> render_oracle(const std::vector<ProjectedGaussian<T>>& projected, const Camera<T>& camera,
                              const RasterConfig& config);

/// Gradients of the projected attributes given dL/dcolor (H x W x 3) and
/// dL/ddepth (H x W). Either raster may be empty (treated as zero).
template <typename T>
std::vector<ProjectedGrad<T>> render_backward(const RenderState<T>& state, const Raster<T>& d_color,
                                              const Raster<T>& d_depth);

/// Chains projected-attribute gradients back to the cloud parameters and
/// accumulates them into `grads` (same shape as `cloud`).
template <typename T>
void project_backward(const GaussianCloud<T>& cloud, const Camera<T>& camera, const RenderState<T>& state,
                      const std::vector<ProjectedGrad<T>>& projected_grads, GaussianCloud<T>& grads);

/// Forward + backward bundle for one camera.
template <typename T> class Rasterizer {
public:
    explicit Rasterizer(RasterConfig config = {}) : config_(std::move(config)) {}

    const RasterConfig& config() const { return config_; }
    RasterConfig& config() { return config_; }

    RenderOutput<T> forward(const GaussianCloud<T>& cloud, const Camera<T>& camera);

    /// Gradients with respect to the cloud passed to the last forward().
    /// Throws StateMismatchError if the cloud or camera differs in shape.
    GaussianCloud<T> backward(const GaussianCloud<T>& cloud, const Camera<T>& camera, const Raster<T>& d_color,
                              const Raster<T>& d_depth) const;

    const RenderState<T>& state() const { return state_; }
    /// Per-Gaussian dL/d(mean2d) magnitude from the last backward(), indexed
    /// by Gaussian id (zero for culled Gaussians).
    const std::vector<T>& screen_grad_norms() const { return screen_grad_norms_; }

private:
    RasterConfig config_;
    RenderState<T> state_;
    bool has_state_ = false;
    mutable std::vector<T> screen_grad_norms_;
};

} // namespace dynsplat
