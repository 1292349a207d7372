#pragma once

#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/core/geometry.hpp"
#include "dynsplat/deform/deformation.hpp"
#include "dynsplat/init/frame.hpp"
#include "dynsplat/loss/losses.hpp"
#include "dynsplat/raster/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dynsplat::testing {

using Rng = std::mt19937_64;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("dynsplat_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Pinhole camera with the principal point at the image centre. A non-zero
/// `pose_seed` gives a small random rotation and translation.
template <typename T> Camera<T> make_camera(int w, int h, std::uint64_t pose_seed = 0) {
    Camera<T> cam;
    cam.width = w;
    cam.height = h;
    cam.fx = cam.fy = static_cast<T>(std::max(w, h));
    cam.cx = static_cast<T>(0.5 * (w - 1));
    cam.cy = static_cast<T>(0.5 * (h - 1));
    cam.near_plane = T(0.1);
    cam.far_plane = T(100);
    if (pose_seed != 0) {
        Rng rng(pose_seed);
        const Eigen::Vector3d axis = Eigen::Vector3d(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).normalized();
        const Eigen::Matrix3d r = Eigen::AngleAxisd(uniform(rng, -0.3, 0.3), axis).toRotationMatrix();
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = r;
        m.topRightCorner<3, 1>() = Eigen::Vector3d(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
        cam.camera_to_world = m.cast<T>();
    }
    return cam;
}

/// `n` Gaussians in view of `cam` with camera depths in [2, 6] at least
/// 0.01 apart (so finite differences never reorder them), opacities in
/// (0.1, 0.9), footprints of one to a few pixels and colors kept away from
/// the SH clamp.
template <typename T>
GaussianCloud<T> random_cloud(std::uint64_t seed, std::size_t n, const Camera<T>& cam, int sh_degree = 3) {
    Rng rng(seed);
    GaussianCloud<T> cloud(n, sh_degree);
    std::vector<double> depths;
    while (depths.size() < n) {
        const double z = uniform(rng, 2.0, 6.0);
        if (std::all_of(depths.begin(), depths.end(), [&](double d) { return std::abs(d - z) > 0.01; }))
            depths.push_back(z);
    }
    const Camera<double> c = cam.template cast<double>();
    const int coeffs = sh_coeff_count(sh_degree);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = depths[i];
        const double u = uniform(rng, 0, c.width - 1), v = uniform(rng, 0, c.height - 1);
        const Eigen::Vector3d pc((u - c.cx) * z / c.fx, (v - c.cy) * z / c.fy, z);
        cloud.position(i) = c.to_world(pc).cast<T>();
        Vec4<T> q;
        for (int k = 0; k < 4; ++k) q[k] = static_cast<T>(uniform(rng, -1, 1));
        q[0] += T(1.5);
        cloud.rotation(i) = q;
        for (int k = 0; k < 3; ++k) cloud.log_scale(i)[k] = static_cast<T>(std::log(uniform(rng, 0.04, 0.25)));
        cloud.opacity_logits[i] = static_cast<T>(uniform(rng, -2.0, 2.0));
        const auto sh = cloud.sh(i);
        for (int ch = 0; ch < 3; ++ch) {
            sh[static_cast<std::size_t>(ch)] = static_cast<T>((uniform(rng, 0.25, 0.75) - kShColorOffset) / kShC0);
            for (int b = 1; b < coeffs; ++b) sh[static_cast<std::size_t>(3 * b + ch)] = static_cast<T>(uniform(rng, -0.05, 0.05));
        }
    }
    return cloud;
}

template <typename T> Raster<T> random_raster(Rng& rng, int w, int h, int c, double lo, double hi) {
    Raster<T> r(w, h, c);
    for (auto& v : r.data) v = static_cast<T>(uniform(rng, lo, hi));
    return r;
}

inline Raster<std::uint8_t> random_mask(Rng& rng, int w, int h, double keep) {
    Raster<std::uint8_t> m(w, h, 1);
    for (auto& v : m.data) v = uniform(rng, 0, 1) < keep ? 1 : 0;
    return m;
}

/// Rasterizer settings under which the image is a smooth function of every
/// parameter: unbounded footprints, no early termination.
inline RasterConfig smooth_raster_config() {
    RasterConfig rc;
    rc.alpha_cutoff = 0.0;
    rc.stop_transmittance = 0.0;
    rc.background = {0.1, 0.2, 0.3};
    return rc;
}

/// Central-difference comparison over many scalars.
struct GradCheck {
    double max_rel = 0.0;
    std::size_t checked = 0;
    std::size_t total = 0;
    std::string worst;

    void merge(const GradCheck& o) {
        if (o.max_rel > max_rel) {
            max_rel = o.max_rel;
            worst = o.worst;
        }
        checked += o.checked;
        total += o.total;
    }
};

/// Central difference of f along values[i], starting at step h. A step that
/// straddles a kink (ReLU, L1, cell boundary) shows up as disagreement
/// between D(h) and D(h/2) well beyond truncation and roundoff error; the
/// step then shrinks tenfold, down to 1e-7.
/// The analytic value plays no part in choosing the step.
inline double central_difference(std::span<double> values, std::size_t i, const std::function<double()>& f, double h) {
    const double keep = values[i];
    double scale = 0; // |f| near the entry, for the roundoff estimate
    auto diff = [&](double step) {
        values[i] = keep + step;
        const double fp = f();
        values[i] = keep - step;
        const double fm = f();
        values[i] = keep;
        scale = std::max({scale, std::abs(fp), std::abs(fm)});
        return (fp - fm) / (2 * step);
    };
    double d = diff(h);
    for (; h > 1.5e-7; h *= 0.1) {
        const double half = diff(0.5 * h);
        const double roundoff = 256 * std::numeric_limits<double>::epsilon() * std::max(scale, 1.0) / (0.5 * h);
        if (std::abs(d - half) <= 1e-5 * std::max(std::abs(d), std::abs(half)) + roundoff)
            return (4 * half - d) / 3; // Richardson: cancels the h^2 term

        d = diff(0.1 * h);
    }
    return d;
}

/// Compares central differences with `analytic` entry by entry. Entries
/// where both magnitudes are at most `floor` are skipped.
inline void check_block(GradCheck& out, const std::string& name, std::span<double> values,
                        std::span<const double> analytic, const std::function<double()>& f, double h = 1e-3,
                        double floor = 1e-6) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double numeric = central_difference(values, i, f, h);
        const double a = analytic[i];
        ++out.total;
        const double mag = std::max(std::abs(a), std::abs(numeric));
        if (mag <= floor) continue;
        ++out.checked;
        const double rel = std::abs(a - numeric) / mag;
        if (rel > out.max_rel) {
            out.max_rel = rel;
            out.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                        std::to_string(numeric);
        }
    }
}

/// Linear functional of a render: sum(wc * color) + sum(wd * depth).
struct RenderObjective {
    Raster<double> wc;
    Raster<double> wd;

    RenderObjective(std::uint64_t seed, int w, int h) {
        Rng rng(seed);
        wc = random_raster<double>(rng, w, h, 3, -1, 1);
        wd = random_raster<double>(rng, w, h, 1, -0.3, 0.3);
    }
    double operator()(const RenderOutput<double>& r) const {
        double s = 0;
        for (std::size_t i = 0; i < wc.data.size(); ++i) s += wc.data[i] * r.color.data[i];
        for (std::size_t i = 0; i < wd.data.size(); ++i) s += wd.data[i] * r.depth.data[i];
        return s;
    }
};

inline void check_cloud(GradCheck& out, const std::string& prefix, GaussianCloud<double>& cloud,
                        GaussianCloud<double>& grads, const std::function<double()>& f, double h = 1e-3) {
    for (const auto& blk : cloud.parameter_blocks(grads))
        check_block(out, prefix + blk.name, blk.values, blk.grads, f, h);
}

/// Rasterizer gradients for every Gaussian attribute on one random scene.
inline GradCheck check_rasterizer_gradients(std::uint64_t seed, int w = 24, int h = 20, std::size_t n = 12) {
    const Camera<double> cam = make_camera<double>(w, h, seed % 2 ? seed : 0);
    GaussianCloud<double> cloud = random_cloud<double>(seed, n, cam);
    const RenderObjective obj(seed + 1000, w, h);
    Rasterizer<double> raster(smooth_raster_config());
    raster.forward(cloud, cam);
    GaussianCloud<double> grads = raster.backward(cloud, cam, obj.wc, obj.wd);
    Rasterizer<double> probe(smooth_raster_config());
    GradCheck out;
    check_cloud(out, "", cloud, grads, [&] { return obj(probe.forward(cloud, cam)); });
    return out;
}

/// Small field with non-zero decoder outputs and mixing vectors so that every
/// parameter influences the deformed cloud.
inline DeformationField<double> random_field(std::uint64_t seed, EncoderKind kind, const BoundingBox& bounds) {
    DeformationConfig dc;
    dc.encoder = kind;
    dc.hexplane.levels = 2;
    dc.hexplane.base_spatial = 4;
    dc.hexplane.base_temporal = 3;
    dc.hexplane.channels = 3;
    dc.positional.frequencies = 2;
    dc.positional.width = 8;
    dc.positional.hidden_layers = 2;
    dc.positional.out_features = 6;
    dc.decoder.hidden_width = 6;
    DeformationField<double> field(dc, bounds, seed);
    Rng rng(seed ^ 0x5eedULL);
    for (int k = 0; k < 4; ++k) {
        auto& head = field.decoders().head(k);
        for (Eigen::Index i = 0; i < head.weights.back().size(); ++i)
            head.weights.back().data()[i] = uniform(rng, -0.1, 0.1);
        for (Eigen::Index i = 0; i < head.biases.back().size(); ++i)
            head.biases.back().data()[i] = uniform(rng, -0.05, 0.05);
    }
    if (kind == EncoderKind::HexPlane) {
        for (int l = 0; l < dc.hexplane.levels; ++l)
            for (auto& v : field.hexplane().mix(l)) v = uniform(rng, 0.5, 1.5);
    }
    return field;
}

/// Gradients of render(deform(cloud, t)) with respect to every field
/// parameter (planes, mixing vectors or encoder MLP, decoder weights) and
/// the canonical attributes.
inline GradCheck check_deformation_gradients(std::uint64_t seed, EncoderKind kind, int w = 20, int h = 16,
                                             std::size_t n = 8) {
    const Camera<double> cam = make_camera<double>(w, h, seed % 2 ? seed : 0);
    GaussianCloud<double> cloud = random_cloud<double>(seed, n, cam, 1);
    BoundingBox bounds;
    bounds.lo = bounds.hi = Eigen::Vector3d(cloud.positions[0], cloud.positions[1], cloud.positions[2]);
    for (std::size_t i = 0; i < n; ++i) {
        bounds.lo = bounds.lo.cwiseMin(cloud.position(i));
        bounds.hi = bounds.hi.cwiseMax(cloud.position(i));
    }
    bounds = bounds.expanded(0.1);
    DeformationField<double> field = random_field(seed, kind, bounds);
    const double t = 0.37 + 0.05 * static_cast<double>(seed % 7);
    const RenderObjective obj(seed + 2000, w, h);

    Rasterizer<double> raster(smooth_raster_config());
    DeformationCache<double> cache;
    const GaussianCloud<double> deformed = field.deform(cloud, t, &cache);
    raster.forward(deformed, cam);
    const GaussianCloud<double> d_deformed = raster.backward(deformed, cam, obj.wc, obj.wd);
    GaussianCloud<double> d_canonical = cloud.zeros_like();
    field.zero_grad();
    field.backward(cache, d_deformed, d_canonical);

    Rasterizer<double> probe(smooth_raster_config());
    const auto f = [&] { return obj(probe.forward(field.deform(cloud, t), cam)); };
    GradCheck out;
    for (const auto& blk : field.parameter_blocks()) {
        // Copy: the probe must not see gradient buffers change underneath it.
        const std::vector<double> analytic(blk.grads.begin(), blk.grads.end());
        check_block(out, blk.name, blk.values, analytic, f);
    }
    check_cloud(out, "canonical.", cloud, d_canonical, f);
    return out;
}

/// Gradients of every image-space loss term and the temporal TV on random
/// 8 x 8 inputs. The L1 and TV terms are piecewise smooth, so they use a
/// small step that rarely straddles a kink.
inline GradCheck check_loss_gradients(std::uint64_t seed) {
    Rng rng(seed);
    const int w = 8, h = 8;
    const double kink_step = 1e-6;
    GradCheck out;
    const Raster<std::uint8_t> mask = random_mask(rng, w, h, 0.7);
    {
        Raster<double> pred = random_raster<double>(rng, w, h, 3, 0, 1);
        const Raster<double> target = random_raster<double>(rng, w, h, 3, 0, 1);
        Raster<double> g(w, h, 3);
        loss_color(pred, target, mask, &g);
        check_block(out, "color", pred.data, g.data, [&] { return loss_color(pred, target, mask).value; },
                    kink_step);
    }
    {
        Raster<double> pred = random_raster<double>(rng, w, h, 1, 1, 4);
        const Raster<double> target = random_raster<double>(rng, w, h, 1, 1, 4);
        Raster<double> g(w, h, 1);
        loss_depth_binocular(pred, target, mask, &g);
        check_block(out, "depth_binocular", pred.data, g.data,
                    [&] { return loss_depth_binocular(pred, target, mask).value; }, kink_step);
    }
    {
        Raster<double> pred = random_raster<double>(rng, w, h, 1, 1, 4);
        const Raster<double> target = random_raster<double>(rng, w, h, 1, 1, 4);
        Raster<double> g(w, h, 1);
        loss_depth_monocular(pred, target, mask, &g);
        check_block(out, "depth_monocular", pred.data, g.data,
                    [&] { return loss_depth_monocular(pred, target, mask).value; });
    }
    {
        Raster<double> color = random_raster<double>(rng, w, h, 3, 0, 1);
        Raster<double> depth = random_raster<double>(rng, w, h, 1, 1, 4);
        Raster<double> gc(w, h, 3), gd(w, h, 1);
        loss_spatial_tv(color, depth, &gc, &gd);
        const auto f = [&] { return loss_spatial_tv(color, depth); };
        check_block(out, "spatial_tv.color", color.data, gc.data, f, kink_step);
        check_block(out, "spatial_tv.depth", depth.data, gd.data, f, kink_step);
    }
    {
        HexPlaneConfig hc;
        hc.levels = 2;
        hc.base_spatial = 3;
        hc.base_temporal = 4;
        hc.channels = 2;
        BoundingBox b;
        b.hi = Eigen::Vector3d::Ones();
        HexPlaneField<double> field(hc, b, seed);
        for (int l = 0; l < hc.levels; ++l)
            for (int p = 0; p < 6; ++p)
                for (auto& v : field.plane(l, p).values) v = uniform(rng, -1, 1);
        field.zero_grad();
        loss_temporal_tv(field, true);
        for (const auto& blk : field.parameter_blocks()) {
            const std::vector<double> analytic(blk.grads.begin(), blk.grads.end());
            check_block(out, "temporal_tv." + blk.name, blk.values, analytic, [&] { return loss_temporal_tv(field); });
        }
    }
    return out;
}

/// Unit-covariance splat covering the whole image.
inline ProjectedGaussian<double> splat_at(double x, double y, double depth, double opacity, Vec3<double> color, int id) {
    ProjectedGaussian<double> g;
    g.mean2d = {x, y};
    g.cov2d = Mat2<double>::Identity();
    g.conic = {1, 0, 1};
    g.depth = depth;
    g.opacity = opacity;
    g.color = color;
    g.gaussian_id = id;
    g.x_min = g.y_min = 0;
    g.x_max = g.y_max = 1 << 20;
    return g;
}

/// Per-pixel blending written from scratch: weights and transmittance per
/// contributor in front-to-back order.
struct PixelTrace {
    std::vector<double> weights;
    std::vector<double> transmittance; // before each contributor, then the final value
    Vec3<double> color = Vec3<double>::Zero();
    double depth = 0;
};

inline PixelTrace trace_pixel(std::vector<ProjectedGaussian<double>> gs, int x, int y, const RasterConfig& rc) {
    std::sort(gs.begin(), gs.end(), [](const auto& a, const auto& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.gaussian_id < b.gaussian_id;
    });
    PixelTrace t;
    double trans = 1.0;
    t.transmittance.push_back(trans);
    for (const auto& g : gs) {
        const Vec2<double> d(x - g.mean2d.x(), y - g.mean2d.y());
        const double q = d.dot(g.cov2d.inverse() * d);
        const double alpha = std::min(rc.max_alpha, g.opacity * std::exp(-0.5 * q));
        if (alpha < rc.alpha_cutoff) continue;
        if (trans * (1 - alpha) < rc.stop_transmittance) break;
        const double w = alpha * trans;
        t.weights.push_back(w);
        t.color += w * g.color;
        t.depth += w * g.depth;
        trans *= 1 - alpha;
        t.transmittance.push_back(trans);
    }
    t.color += trans * Vec3<double>(rc.background[0], rc.background[1], rc.background[2]);
    return t;
}

} // namespace dynsplat::testing
