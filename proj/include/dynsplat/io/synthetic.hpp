#pragma once

#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/init/frame.hpp"
#include "dynsplat/io/kv_config.hpp"
#include "dynsplat/io/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dynsplat {

enum class DeformationFamily {
    Sinusoidal, ///< rigid translation along a Lissajous curve
    Pulsation,  ///< in-plane radial breathing with a position-dependent phase
};

std::string to_string(DeformationFamily family);
DeformationFamily deformation_family_from_string(const std::string& s);

/// A textured, nearly opaque sheet of Gaussians facing a fixed camera that
/// fills the whole view at every time.
struct SyntheticSpec {
    int gaussians = 500;
    int width = 96;
    int height = 96;
    int frames = 24;
    DeformationFamily family = DeformationFamily::Sinusoidal;
    /// Peak displacement in scene units (the sheet sits at depth 4 and the
    /// view is 4 units wide there).
    double amplitude = 0.15;
    std::uint64_t seed = 7;
    /// Adds a fixed tool rectangle: painted into the images and masked out.
    bool tool_mask = false;
    double depth_scale = 1.0 / 4096.0;

    void validate() const;
    /// Reads `synth.*` keys.
    void apply(const KeyValueConfig& config);
};

struct SyntheticScene {
    SyntheticSpec spec;
    Camera<double> camera;
    GaussianCloud<double> canonical;
    /// Ground-truth cloud per frame.
    std::vector<GaussianCloud<double>> trajectory;
    /// Rendered frames, quantized exactly as their PNG files store them.
    std::vector<FrameRecord> frames;
};

/// Ground-truth cloud of `canonical` at normalized time t.
GaussianCloud<double> synthetic_cloud_at(const SyntheticSpec& spec, const GaussianCloud<double>& canonical, double t);

/// Builds and renders the scene with the reference renderer. Throws
/// ConfigError if any Gaussian centre leaves the guard band around the view.
SyntheticScene generate_synthetic(const SyntheticSpec& spec, const ExecPolicy& exec = {});

/// Writes images/, depth/, masks/, manifest.json and ground_truth.ply under
/// `dir`; returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticScene& scene, const std::filesystem::path& dir);

} // namespace dynsplat
