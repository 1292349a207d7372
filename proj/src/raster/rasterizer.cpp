#include "dynsplat/raster/rasterizer.hpp"

#include "dynsplat/core/geometry.hpp"
#include "dynsplat/core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dynsplat {

void RasterConfig::validate() const {
    if (tile_size < 1) throw ConfigError("tile size must be >= 1");
    if (!(dilation >= 0)) throw ConfigError("dilation must be >= 0");
    if (!(alpha_cutoff >= 0) || alpha_cutoff >= 1) throw ConfigError("alpha cutoff must be in [0, 1)");
    if (!(max_alpha > 0) || max_alpha >= 1) throw ConfigError("max alpha must be in (0, 1)");
    if (!(stop_transmittance >= 0) || stop_transmittance >= 1)
        throw ConfigError("stop transmittance must be in [0, 1)");
}

namespace {

template <typename T> struct BlendParams {
    T cutoff;
    T max_alpha;
    T stop;
    Vec3<T> background;

    explicit BlendParams(const RasterConfig& c)
        : cutoff(static_cast<T>(c.alpha_cutoff)), max_alpha(static_cast<T>(c.max_alpha)),
          stop(static_cast<T>(c.stop_transmittance)),
          background(static_cast<T>(c.background[0]), static_cast<T>(c.background[1]),
                     static_cast<T>(c.background[2])) {}
};

template <typename T> T splat_power(const ProjectedGaussian<T>& g, T dx, T dy) {
    return T(-0.5) * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
}

template <typename T> void allocate_output(RenderOutput<T>& out, int w, int h, const Vec3<T>& bg) {
    out.color = Raster<T>(w, h, 3);
    for (std::size_t p = 0; p < out.color.pixel_count(); ++p) {
        for (int c = 0; c < 3; ++c) out.color.data[3 * p + static_cast<std::size_t>(c)] = bg[c];
    }
    out.depth = Raster<T>(w, h, 1);
    out.alpha = Raster<T>(w, h, 1);
    out.normalized_depth = Raster<T>(w, h, 1);
    out.contributors = Raster<int>(w, h, 1);
}

template <typename T> void finish_pixel(RenderOutput<T>& out, std::size_t p, const Vec3<T>& color, T depth,
                                        T transmittance, int count, const Vec3<T>& bg) {
    for (int c = 0; c < 3; ++c) out.color.data[3 * p + static_cast<std::size_t>(c)] = color[c] + transmittance * bg[c];
    out.depth.data[p] = depth;
    const T a = T(1) - transmittance;
    out.alpha.data[p] = a;
    out.normalized_depth.data[p] = a > T(0) ? depth / a : T(0);
    out.contributors.data[p] = count;
}

template <typename T> bool front_to_back(const ProjectedGaussian<T>& a, const ProjectedGaussian<T>& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.gaussian_id < b.gaussian_id;
}

} // namespace

template <typename T>
std::vector<ProjectedGaussian<T>> project(const GaussianCloud<T>& cloud, const Camera<T>& camera,
                                          const RasterConfig& config) {
    config.validate();
    camera.validate();
    const Mat3<T> r_cw = camera.rotation_world_to_camera();
    const Vec3<T> t_cw = camera.translation_world_to_camera();
    const Vec3<T> cam_center = camera.center();
    const T dilation = static_cast<T>(config.dilation);
    const double cutoff = config.alpha_cutoff;

    std::vector<ProjectedGaussian<T>> out;
    out.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3<T> mu = cloud.position(i);
        const Vec3<T> pc = r_cw * mu + t_cw;
        const T z = pc.z();
        if (!(z > camera.near_plane && z < camera.far_plane)) continue;

        const T opacity = sigmoid(cloud.opacity_logits[i]);
        if (cutoff > 0 && static_cast<double>(opacity) < cutoff) continue;

        Mat23<T> jac;
        jac << camera.fx / z, T(0), -camera.fx * pc.x() / (z * z), T(0), camera.fy / z, -camera.fy * pc.y() / (z * z);
        const Mat23<T> tm = jac * r_cw;
        const Mat3<T> sigma = build_covariance<T>(cloud.rotation(i), cloud.log_scale(i));
        Mat2<T> cov = tm * sigma * tm.transpose();
        cov(0, 0) += dilation;
        cov(1, 1) += dilation;
        cov(0, 1) = cov(1, 0) = T(0.5) * (cov(0, 1) + cov(1, 0));
        const T det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
        if (!(det > T(0))) continue;

        ProjectedGaussian<T> g;
        g.gaussian_id = static_cast<int>(i);
        g.mean2d = camera.project_camera_point(pc);
        g.cov2d = cov;
        g.conic = Vec3<T>(cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det);
        g.depth = z;
        g.opacity = opacity;

        // Footprint where opacity * G >= cutoff: the ellipse q <= 2 ln(o / cutoff).
        const double w = camera.width, h = camera.height;
        if (cutoff > 0) {
            const double k2 = 2.0 * std::log(static_cast<double>(opacity) / cutoff);
            const double rx = std::sqrt(k2 * static_cast<double>(cov(0, 0))) + 0.5;
            const double ry = std::sqrt(k2 * static_cast<double>(cov(1, 1))) + 0.5;
            const double mx = static_cast<double>(g.mean2d.x()), my = static_cast<double>(g.mean2d.y());
            if (!std::isfinite(mx) || !std::isfinite(my)) continue;
            const double x0 = std::max(0.0, std::floor(mx - rx)), x1 = std::min(w - 1.0, std::ceil(mx + rx));
            const double y0 = std::max(0.0, std::floor(my - ry)), y1 = std::min(h - 1.0, std::ceil(my + ry));
            if (x0 > x1 || y0 > y1) continue;
            g.x_min = static_cast<int>(x0);
            g.x_max = static_cast<int>(x1);
            g.y_min = static_cast<int>(y0);
            g.y_max = static_cast<int>(y1);
        } else {
            g.x_min = 0;
            g.x_max = camera.width - 1;
            g.y_min = 0;
            g.y_max = camera.height - 1;
        }

        const Vec3<T> view = mu - cam_center;
        const ShColor<T> sh = eval_sh<T>(cloud.sh(i), view / view.norm(), cloud.sh_degree);
        g.color = sh.rgb;
        g.color_clamped = sh.clamped;
        out.push_back(g);
    }
    return out;
}

template <typename T>
RenderOutput<T> render(const std::vector<ProjectedGaussian<T>>& projected, const Camera<T>& camera,
                       const RasterConfig& config, RenderState<T>* state) {
    config.validate();
    const int w = camera.width, h = camera.height, ts = config.tile_size;
    const int tiles_x = (w + ts - 1) / ts, tiles_y = (h + ts - 1) / ts;
    const int tile_count = tiles_x * tiles_y;
    const BlendParams<T> bp(config);

    // Bin Gaussians into tiles, then sort each tile front-to-back.
    // Footprints are clamped to the image; callers may pass wider rectangles.
    const auto tile_range = [&](const ProjectedGaussian<T>& g) {
        return std::array<int, 4>{std::max(g.x_min, 0) / ts, std::min(g.x_max, w - 1) / ts, std::max(g.y_min, 0) / ts,
                                  std::min(g.y_max, h - 1) / ts};
    };
    std::vector<std::uint32_t> offsets(static_cast<std::size_t>(tile_count) + 1, 0);
    for (const auto& g : projected) {
        if (g.x_min > g.x_max || g.y_min > g.y_max) continue;
        const auto r = tile_range(g);
        for (int ty = r[2]; ty <= r[3]; ++ty)
            for (int tx = r[0]; tx <= r[1]; ++tx) ++offsets[static_cast<std::size_t>(ty * tiles_x + tx) + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::uint32_t> entries(offsets.back());
    {
        std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::uint32_t k = 0; k < projected.size(); ++k) {
            const auto& g = projected[k];
            if (g.x_min > g.x_max || g.y_min > g.y_max) continue;
            const auto r = tile_range(g);
            for (int ty = r[2]; ty <= r[3]; ++ty)
                for (int tx = r[0]; tx <= r[1]; ++tx)
                    entries[cursor[static_cast<std::size_t>(ty * tiles_x + tx)]++] = k;
        }
    }
    parallel_for(tile_count, config.exec, [&](int tile, int) {
        std::sort(entries.begin() + offsets[static_cast<std::size_t>(tile)],
                  entries.begin() + offsets[static_cast<std::size_t>(tile) + 1],
                  [&](std::uint32_t a, std::uint32_t b) { return front_to_back(projected[a], projected[b]); });
    });

    RenderOutput<T> out;
    allocate_output(out, w, h, bp.background);
    std::vector<T> final_t(static_cast<std::size_t>(w) * h, T(1));
    std::vector<std::uint32_t> walk_end(static_cast<std::size_t>(w) * h, 0);

    parallel_for(tile_count, config.exec, [&](int tile, int) {
        const int tx = tile % tiles_x, ty = tile / tiles_x;
        const std::uint32_t begin = offsets[static_cast<std::size_t>(tile)];
        const std::uint32_t end = offsets[static_cast<std::size_t>(tile) + 1];
        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                T trans = 1;
                Vec3<T> color = Vec3<T>::Zero();
                T depth = 0;
                int count = 0;
                std::uint32_t last = begin;
                for (std::uint32_t e = begin; e < end; ++e) {
                    const auto& g = projected[entries[e]];
                    if (!g.covers(x, y)) continue;
                    const T dx = g.mean2d.x() - static_cast<T>(x), dy = g.mean2d.y() - static_cast<T>(y);
                    const T alpha = std::min(bp.max_alpha, g.opacity * std::exp(splat_power(g, dx, dy)));
                    if (alpha < bp.cutoff) continue;
                    const T next = trans * (T(1) - alpha);
                    if (next < bp.stop) break;
                    const T weight = alpha * trans;
                    color += weight * g.color;
                    depth += weight * g.depth;
                    trans = next;
                    ++count;
                    last = e + 1;
                }
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                finish_pixel(out, p, color, depth, trans, count, bp.background);
                final_t[p] = trans;
                walk_end[p] = last;
            }
        }
    });

    if (state) {
        state->width = w;
        state->height = h;
        state->config = config;
        state->projected = projected;
        state->tiles_x = tiles_x;
        state->tiles_y = tiles_y;
        state->tile_offsets = std::move(offsets);
        state->tile_entries = std::move(entries);
        state->final_transmittance = std::move(final_t);
        state->walk_end = std::move(walk_end);
    }
    return out;
}

template <typename T>
RenderOutput<T> render_oracle(const std::vector<ProjectedGaussian<T>>& projected, const Camera<T>& camera,
                              const RasterConfig& config) {
    config.validate();
    const BlendParams<T> bp(config);
    std::vector<const ProjectedGaussian<T>*> order;
    order.reserve(projected.size());
    for (const auto& g : projected) order.push_back(&g);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return front_to_back(*a, *b); });

    RenderOutput<T> out;
    allocate_output(out, camera.width, camera.height, bp.background);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            T trans = 1;
            Vec3<T> color = Vec3<T>::Zero();
            T depth = 0;
            int count = 0;
            for (const auto* g : order) {
                const T dx = g->mean2d.x() - static_cast<T>(x), dy = g->mean2d.y() - static_cast<T>(y);
                const T alpha = std::min(bp.max_alpha, g->opacity * std::exp(splat_power(*g, dx, dy)));
                if (alpha < bp.cutoff) continue;
                const T weight = alpha * trans;
                color += weight * g->color;
                depth += weight * g->depth;
                trans *= T(1) - alpha;
                ++count;
            }
            finish_pixel(out, static_cast<std::size_t>(y) * camera.width + x, color, depth, trans, count,
                         bp.background);
        }
    }
    return out;
}

template <typename T>
std::vector<ProjectedGrad<T>> render_backward(const RenderState<T>& state, const Raster<T>& d_color,
                                              const Raster<T>& d_depth) {
    const int w = state.width, h = state.height;
    const bool has_color = !d_color.data.empty(), has_depth = !d_depth.data.empty();
    if ((has_color && (!d_color.same_shape(w, h) || d_color.channels != 3)) ||
        (has_depth && (!d_depth.same_shape(w, h) || d_depth.channels != 1)))
        throw StateMismatchError("render_backward: upstream gradient shape does not match the forward pass");
    if (state.final_transmittance.size() != static_cast<std::size_t>(w) * h ||
        state.walk_end.size() != state.final_transmittance.size() ||
        state.tile_offsets.size() != static_cast<std::size_t>(state.tiles_x * state.tiles_y) + 1)
        throw StateMismatchError("render_backward: forward state is incomplete");

    const RasterConfig& config = state.config;
    const BlendParams<T> bp(config);
    const int ts = config.tile_size;
    const int tile_count = state.tiles_x * state.tiles_y;
    const std::size_t n = state.projected.size();
    const int workers = worker_count(tile_count, config.exec);
    std::vector<std::vector<ProjectedGrad<T>>> partial(static_cast<std::size_t>(workers),
                                                       std::vector<ProjectedGrad<T>>(n));

    parallel_for(tile_count, config.exec, [&](int tile, int worker) {
        auto& acc = partial[static_cast<std::size_t>(worker)];
        const int tx = tile % state.tiles_x, ty = tile / state.tiles_x;
        const std::uint32_t begin = state.tile_offsets[static_cast<std::size_t>(tile)];
        for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                const Vec3<T> dc = has_color ? Vec3<T>(d_color.data[3 * p], d_color.data[3 * p + 1],
                                                       d_color.data[3 * p + 2])
                                             : Vec3<T>::Zero();
                const T dd = has_depth ? d_depth.data[p] : T(0);
                if (dc.isZero() && dd == T(0)) continue;
                const T t_final = state.final_transmittance[p];
                const T bg_dot = bp.background.dot(dc);
                T trans = t_final;
                Vec3<T> accum_color = Vec3<T>::Zero();
                T accum_depth = 0;
                T last_alpha = 0;
                Vec3<T> last_color = Vec3<T>::Zero();
                T last_depth = 0;
                for (std::uint32_t e = state.walk_end[p]; e-- > begin;) {
                    const std::uint32_t k = state.tile_entries[e];
                    const auto& g = state.projected[k];
                    if (!g.covers(x, y)) continue;
                    const T dx = g.mean2d.x() - static_cast<T>(x), dy = g.mean2d.y() - static_cast<T>(y);
                    const T gauss = std::exp(splat_power(g, dx, dy));
                    const T raw_alpha = g.opacity * gauss;
                    const T alpha = std::min(bp.max_alpha, raw_alpha);
                    if (alpha < bp.cutoff) continue;
                    trans /= T(1) - alpha;
                    const T weight = alpha * trans;
                    auto& out = acc[k];
                    out.d_color += weight * dc;
                    out.d_depth += weight * dd;

                    accum_color = last_alpha * last_color + (T(1) - last_alpha) * accum_color;
                    accum_depth = last_alpha * last_depth + (T(1) - last_alpha) * accum_depth;
                    last_alpha = alpha;
                    last_color = g.color;
                    last_depth = g.depth;

                    T d_alpha = trans * ((g.color - accum_color).dot(dc) + (g.depth - accum_depth) * dd);
                    d_alpha -= t_final / (T(1) - alpha) * bg_dot;
                    if (raw_alpha > bp.max_alpha) continue;

                    out.d_opacity += gauss * d_alpha;
                    const T d_power = g.opacity * gauss * d_alpha;
                    out.d_conic[0] += T(-0.5) * dx * dx * d_power;
                    out.d_conic[1] += -dx * dy * d_power;
                    out.d_conic[2] += T(-0.5) * dy * dy * d_power;
                    out.d_mean2d.x() += d_power * (-g.conic[0] * dx - g.conic[1] * dy);
                    out.d_mean2d.y() += d_power * (-g.conic[2] * dy - g.conic[1] * dx);
                }
            }
        }
    });

    std::vector<ProjectedGrad<T>> grads = std::move(partial[0]);
    for (std::size_t wkr = 1; wkr < partial.size(); ++wkr) {
        for (std::size_t k = 0; k < n; ++k) grads[k] += partial[wkr][k];
    }
    return grads;
}

template <typename T>
void project_backward(const GaussianCloud<T>& cloud, const Camera<T>& camera, const RenderState<T>& state,
                      const std::vector<ProjectedGrad<T>>& projected_grads, GaussianCloud<T>& grads) {
    if (state.cloud_size != 0 && state.cloud_size != cloud.size())
        throw StateMismatchError("project_backward: cloud size differs from the forward pass");
    if (projected_grads.size() != state.projected.size())
        throw StateMismatchError("project_backward: gradient count differs from projected count");
    if (grads.size() != cloud.size() || grads.sh_degree != cloud.sh_degree)
        throw StateMismatchError("project_backward: gradient buffer shape differs from cloud");
    if (camera.width != state.width || camera.height != state.height)
        throw StateMismatchError("project_backward: camera differs from the forward pass");

    const Mat3<T> r_cw = camera.rotation_world_to_camera();
    const Vec3<T> t_cw = camera.translation_world_to_camera();
    const Vec3<T> cam_center = camera.center();
    const T fx = camera.fx, fy = camera.fy;

    for (std::size_t k = 0; k < state.projected.size(); ++k) {
        const auto& g = state.projected[k];
        const auto& pg = projected_grads[k];
        const auto i = static_cast<std::size_t>(g.gaussian_id);
        if (i >= cloud.size()) throw StateMismatchError("project_backward: Gaussian id out of range");

        const Vec3<T> mu = cloud.position(i);
        const Vec3<T> pc = r_cw * mu + t_cw;
        const T x = pc.x(), y = pc.y(), z = pc.z();

        // Opacity.
        grads.opacity_logits[i] += pg.d_opacity * g.opacity * (T(1) - g.opacity);

        // Conic -> covariance: d(cov) = -Q dQ Q with dQ symmetric.
        Mat2<T> q_mat;
        q_mat << g.conic[0], g.conic[1], g.conic[1], g.conic[2];
        Mat2<T> d_q;
        d_q << pg.d_conic[0], T(0.5) * pg.d_conic[1], T(0.5) * pg.d_conic[1], pg.d_conic[2];
        const Mat2<T> d_cov = -q_mat * d_q * q_mat;

        Mat23<T> jac;
        jac << fx / z, T(0), -fx * x / (z * z), T(0), fy / z, -fy * y / (z * z);
        const Mat23<T> tm = jac * r_cw;
        const Mat3<T> sigma = build_covariance<T>(cloud.rotation(i), cloud.log_scale(i));

        const Mat3<T> d_sigma = tm.transpose() * d_cov * tm;
        const Mat23<T> d_tm = (d_cov + d_cov.transpose()) * tm * sigma;
        const Mat23<T> d_jac = d_tm * r_cw.transpose();

        const CovarianceGrad<T> cg = build_covariance_backward<T>(cloud.rotation(i), cloud.log_scale(i), d_sigma);
        grads.rotation(i) += cg.d_quaternion;
        grads.log_scale(i) += cg.d_log_scale;

        Vec3<T> d_pc = Vec3<T>::Zero();
        const T z2 = z * z, z3 = z2 * z;
        d_pc.x() += d_jac(0, 2) * (-fx / z2);
        d_pc.y() += d_jac(1, 2) * (-fy / z2);
        d_pc.z() += d_jac(0, 0) * (-fx / z2) + d_jac(0, 2) * (T(2) * fx * x / z3) + d_jac(1, 1) * (-fy / z2) +
                    d_jac(1, 2) * (T(2) * fy * y / z3);
        d_pc.x() += pg.d_mean2d.x() * fx / z;
        d_pc.y() += pg.d_mean2d.y() * fy / z;
        d_pc.z() += -pg.d_mean2d.x() * fx * x / z2 - pg.d_mean2d.y() * fy * y / z2;
        d_pc.z() += pg.d_depth;

        Vec3<T> d_mu = r_cw.transpose() * d_pc;

        // View-dependent color.
        const Vec3<T> view = mu - cam_center;
        const T view_norm = view.norm();
        const Vec3<T> dir = view / view_norm;
        ShColor<T> sh_fwd;
        sh_fwd.rgb = g.color;
        sh_fwd.clamped = g.color_clamped;
        const Vec3<T> d_dir = eval_sh_backward<T>(cloud.sh(i), dir, cloud.sh_degree, sh_fwd, pg.d_color, grads.sh(i));
        d_mu += (d_dir - dir * dir.dot(d_dir)) / view_norm;

        grads.position(i) += d_mu;
    }
}

template <typename T> RenderOutput<T> Rasterizer<T>::forward(const GaussianCloud<T>& cloud, const Camera<T>& camera) {
    auto projected = project(cloud, camera, config_);
    RenderOutput<T> out = render(projected, camera, config_, &state_);
    state_.cloud_size = cloud.size();
    has_state_ = true;
    return out;
}

template <typename T>
GaussianCloud<T> Rasterizer<T>::backward(const GaussianCloud<T>& cloud, const Camera<T>& camera,
                                         const Raster<T>& d_color, const Raster<T>& d_depth) const {
    if (!has_state_) throw StateMismatchError("Rasterizer::backward called before forward");
    const auto pgrads = render_backward(state_, d_color, d_depth);
    GaussianCloud<T> grads = cloud.zeros_like();
    project_backward(cloud, camera, state_, pgrads, grads);
    screen_grad_norms_.assign(cloud.size(), T(0));
    for (std::size_t k = 0; k < pgrads.size(); ++k)
        screen_grad_norms_[static_cast<std::size_t>(state_.projected[k].gaussian_id)] = pgrads[k].d_mean2d.norm();
    return grads;
}

#define DYNSPLAT_INSTANTIATE(T)                                                                                   \
    template std::vector<ProjectedGaussian<T>> project(const GaussianCloud<T>&, const Camera<T>&,                 \
                                                       const RasterConfig&);                                      \
    template RenderOutput<T> render(const std::vector<ProjectedGaussian<T>>&, const Camera<T>&,                   \
                                    const RasterConfig&, RenderState<T>*);                                        \
    template RenderOutput<T> render_oracle(const std::vector<ProjectedGaussian<T>>&, const Camera<T>&,            \
                                           const RasterConfig&);                                                  \
    template std::vector<ProjectedGrad<T>> render_backward(const RenderState<T>&, const Raster<T>&,               \
                                                           const Raster<T>&);                                     \
    template void project_backward(const GaussianCloud<T>&, const Camera<T>&, const RenderState<T>&,              \
                                   const std::vector<ProjectedGrad<T>>&, GaussianCloud<T>&);                      \
    template class Rasterizer<T>;

DYNSPLAT_INSTANTIATE(float)
DYNSPLAT_INSTANTIATE(double)
#undef DYNSPLAT_INSTANTIATE

} // namespace dynsplat
