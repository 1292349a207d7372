#include "dynsplat/io/synthetic.hpp"

#include "dynsplat/core/geometry.hpp"
#include "dynsplat/core/parallel.hpp"
#include "dynsplat/io/ply.hpp"
#include "dynsplat/io/png.hpp"
#include "dynsplat/raster/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

namespace dynsplat {

namespace {

constexpr double kSheetDepth = 4.0;
constexpr double kSheetRelief = 0.15;
/// Sheet half-width relative to the half-width of the view at kSheetDepth.
constexpr double kSheetOverscan = 1.12;
/// Gaussian centres must project inside this multiple of the view.
constexpr double kGuardBand = 1.3;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Camera<double> synthetic_camera(const SyntheticSpec& s) {
    Camera<double> c;
    c.fx = c.fy = static_cast<double>(std::max(s.width, s.height));
    c.cx = 0.5 * s.width - 0.5;
    c.cy = 0.5 * s.height - 0.5;
    c.width = s.width;
    c.height = s.height;
    c.near_plane = 0.1;
    c.far_plane = 20.0;
    return c;
}

Eigen::Vector3d tool_color() { return {0.62, 0.62, 0.66}; }
constexpr double kToolDepth = 2.5;

bool in_tool(const SyntheticSpec& s, int x, int y) {
    return x >= static_cast<int>(0.55 * s.width) && x < static_cast<int>(0.75 * s.width) &&
           y >= static_cast<int>(0.25 * s.height);
}

} // namespace

std::string to_string(DeformationFamily family) {
    return family == DeformationFamily::Sinusoidal ? "sinusoidal" : "pulsation";
}

DeformationFamily deformation_family_from_string(const std::string& s) {
    if (s == "sinusoidal") return DeformationFamily::Sinusoidal;
    if (s == "pulsation") return DeformationFamily::Pulsation;
    throw ConfigError("unknown deformation family '" + s + "' (expected sinusoidal or pulsation)");
}

void SyntheticSpec::validate() const {
    if (gaussians < 4) throw ConfigError("synthetic scene needs at least 4 Gaussians");
    if (width < 8 || height < 8) throw ConfigError("synthetic images must be at least 8x8");
    if (frames < 1) throw ConfigError("synthetic scene needs at least one frame");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw ConfigError("amplitude must be finite and >= 0");
    if (!(depth_scale > 0.0)) throw ConfigError("depth scale must be positive");
}

void SyntheticSpec::apply(const KeyValueConfig& c) {
    gaussians = static_cast<int>(c.get_int("synth.gaussians", gaussians));
    width = static_cast<int>(c.get_int("synth.width", width));
    height = static_cast<int>(c.get_int("synth.height", height));
    frames = static_cast<int>(c.get_int("synth.frames", frames));
    family = deformation_family_from_string(c.get_string("synth.family", to_string(family)));
    amplitude = c.get_double("synth.amplitude", amplitude);
    seed = static_cast<std::uint64_t>(c.get_int("synth.seed", static_cast<long long>(seed)));
    tool_mask = c.get_bool("synth.tool_mask", tool_mask);
    depth_scale = c.get_double("synth.depth_scale", depth_scale);
}

GaussianCloud<double> synthetic_cloud_at(const SyntheticSpec& spec, const GaussianCloud<double>& canonical, double t) {
    GaussianCloud<double> out = canonical;
    const double a = spec.amplitude;
    if (spec.family == DeformationFamily::Sinusoidal) {
        const Eigen::Vector3d offset(a * std::sin(kTwoPi * t), 0.7 * a * std::sin(2.0 * kTwoPi * t + 0.6),
                                     0.3 * a * std::sin(kTwoPi * t + 1.2));
        for (std::size_t i = 0; i < out.size(); ++i) out.position(i) += offset;
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Eigen::Vector3d p = canonical.position(i);
        const Eigen::Vector2d r(p.x(), p.y());
        const double len = r.norm();
        if (len < 1e-9) continue;
        const double phase = 0.8 * len;
        const double s = a * std::sin(kTwoPi * t + phase) * std::min(1.0, len);
        out.position(i).head<2>() += s * r / len;
    }
    return out;
}

SyntheticScene generate_synthetic(const SyntheticSpec& spec, const ExecPolicy& exec) {
    spec.validate();
    SyntheticScene scene;
    scene.spec = spec;
    scene.camera = synthetic_camera(spec);
    const Camera<double>& cam = scene.camera;

    const double half_x = kSheetOverscan * kSheetDepth * (0.5 * spec.width) / cam.fx;
    const double half_y = kSheetOverscan * kSheetDepth * (0.5 * spec.height) / cam.fy;
    const int nx = static_cast<int>(std::ceil(std::sqrt(spec.gaussians * half_x / half_y)));
    const int ny = (spec.gaussians + nx - 1) / nx;
    const double sx = 2.0 * half_x / nx, sy = 2.0 * half_y / ny;
    const double spacing = std::sqrt(sx * sy);

    std::mt19937_64 rng(spec.seed);
    std::vector<int> cells(static_cast<std::size_t>(nx * ny));
    std::iota(cells.begin(), cells.end(), 0);
    std::vector<int> chosen;
    std::sample(cells.begin(), cells.end(), std::back_inserter(chosen), spec.gaussians, rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    GaussianCloud<double>& g = scene.canonical;
    g.resize(chosen.size(), 0);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const int cx = chosen[i] % nx, cy = chosen[i] / nx;
        const double x = -half_x + (cx + 0.5 + 0.5 * (unit(rng) - 0.5)) * sx;
        const double y = -half_y + (cy + 0.5 + 0.5 * (unit(rng) - 0.5)) * sy;
        const double z = kSheetDepth + kSheetRelief * std::sin(1.3 * x + 0.4) * std::cos(1.1 * y);
        g.position(i) = Eigen::Vector3d(x, y, z);
        const double angle = kTwoPi * unit(rng);
        g.rotation(i) = Eigen::Vector4d(std::cos(0.5 * angle), 0.0, 0.0, std::sin(0.5 * angle));
        const double in_plane = std::log(0.7 * spacing);
        g.log_scale(i) = Eigen::Vector3d(in_plane + 0.15 * noise(rng), in_plane + 0.15 * noise(rng),
                                         std::log(0.2 * spacing));
        g.opacity_logits[i] = logit(0.92);
        // Tissue-like base color with vessel stripes and per-Gaussian mottling.
        const double stripes = std::sin(3.0 * x + 1.5 * std::sin(2.0 * y));
        const double blotch = std::cos(2.2 * y - 0.7 * x);
        Eigen::Vector3d rgb(0.72 + 0.16 * stripes + 0.05 * blotch, 0.36 + 0.12 * blotch - 0.08 * stripes,
                            0.32 + 0.10 * stripes * blotch);
        for (int c = 0; c < 3; ++c) rgb[c] = std::clamp(rgb[c] + 0.06 * noise(rng), 0.05, 0.95);
        const Eigen::Vector3d dc = rgb_to_sh0<double>(rgb);
        auto sh = g.sh(i);
        for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = dc[c];
    }

    const std::vector<float> times = [&] {
        SceneManifest m;
        m.frames.resize(static_cast<std::size_t>(spec.frames));
        return normalized_times(m);
    }();

    scene.trajectory.resize(static_cast<std::size_t>(spec.frames));
    for (int f = 0; f < spec.frames; ++f) {
        auto& cloud = scene.trajectory[static_cast<std::size_t>(f)];
        cloud = synthetic_cloud_at(spec, g, static_cast<double>(times[static_cast<std::size_t>(f)]));
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const Eigen::Vector3d pc = cam.to_camera(cloud.position(i));
            const bool depth_ok = pc.z() > cam.near_plane && pc.z() < cam.far_plane;
            const Eigen::Vector2d uv = depth_ok ? cam.project_camera_point(pc) : Eigen::Vector2d::Zero();
            const bool inside = depth_ok && std::abs(uv.x() - cam.cx) <= kGuardBand * 0.5 * spec.width &&
                                std::abs(uv.y() - cam.cy) <= kGuardBand * 0.5 * spec.height;
            if (!inside)
                throw ConfigError("synthetic scene: Gaussian " + std::to_string(i) + " leaves the view at frame " +
                                  std::to_string(f) + "; reduce the amplitude");
        }
    }

    scene.frames.resize(static_cast<std::size_t>(spec.frames));
    RasterConfig rc;
    parallel_for(spec.frames, exec, [&](int f, int) {
        const auto& cloud = scene.trajectory[static_cast<std::size_t>(f)];
        const RenderOutput<double> out = render_oracle(project(cloud, cam, rc), cam, rc);
        FrameRecord fr;
        fr.index = f;
        fr.time = times[static_cast<std::size_t>(f)];
        fr.camera = cam.cast<float>();
        fr.image = Image(spec.width, spec.height, 3);
        fr.depth = Raster<float>(spec.width, spec.height, 1);
        fr.mask = Raster<std::uint8_t>(spec.width, spec.height, 1, 1);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x) {
                const bool tool = spec.tool_mask && in_tool(spec, x, y);
                for (int c = 0; c < 3; ++c) {
                    const double v = tool ? tool_color()[c] : out.color.at(x, y, c);
                    fr.image.at(x, y, c) = unit_from_byte(byte_from_unit(static_cast<float>(v)));
                }
                const double d = tool ? kToolDepth : out.depth.at(x, y);
                fr.depth.at(x, y) = depth_from_code(code_from_depth(d, spec.depth_scale), spec.depth_scale);
                fr.mask.at(x, y) = tool ? 0 : 1;
            }
        scene.frames[static_cast<std::size_t>(f)] = std::move(fr);
    });
    return scene;
}

std::filesystem::path write_synthetic(const SyntheticScene& scene, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    for (const char* sub : {"images", "depth", "masks"}) fs::create_directories(dir / sub);
    SceneManifest m;
    m.root = dir;
    m.fx = scene.camera.fx;
    m.fy = scene.camera.fy;
    m.cx = scene.camera.cx;
    m.cy = scene.camera.cy;
    m.width = scene.camera.width;
    m.height = scene.camera.height;
    m.near_plane = scene.camera.near_plane;
    m.far_plane = scene.camera.far_plane;
    m.depth_mode = DepthMode::Binocular;
    m.depth_scale = scene.spec.depth_scale;
    m.time_mode = TimeMode::Index;
    for (const auto& f : scene.frames) {
        char name[32];
        std::snprintf(name, sizeof name, "%04d.png", f.index);
        FrameEntry e;
        e.image = std::string("images/") + name;
        e.depth = std::string("depth/") + name;
        e.mask = std::string("masks/") + name;
        e.camera_to_world = scene.camera.camera_to_world;
        write_png_rgb(dir / e.image, f.image);
        write_png_depth(dir / e.depth, f.depth, m.depth_scale);
        write_png_mask(dir / e.mask, f.mask);
        m.frames.push_back(std::move(e));
    }
    const fs::path manifest = dir / "manifest.json";
    write_manifest(manifest, m);

    PointCloud gt;
    for (std::size_t i = 0; i < scene.canonical.size(); ++i) {
        gt.positions.push_back(scene.canonical.position(i));
        const auto sh = scene.canonical.sh(i);
        Eigen::Vector3f rgb;
        for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>(kShC0 * sh[static_cast<std::size_t>(c)] + kShColorOffset);
        gt.colors.push_back(rgb);
    }
    write_ply(dir / "ground_truth.ply", gt);
    return manifest;
}

} // namespace dynsplat
