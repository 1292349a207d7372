#pragma once

#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/types.hpp"
#include "dynsplat/init/frame.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dynsplat {

enum class TimeMode {
    Index,     ///< t_i = i / (T - 1)
    Timestamp, ///< timestamps rescaled to [0, 1]
};

struct FrameEntry {
    std::string image;
    std::string depth;
    std::string mask; ///< empty: every pixel kept
    Mat4<double> camera_to_world = Mat4<double>::Identity();
    std::optional<double> timestamp;
};

/// JSON scene description. Relative file paths resolve against `root`.
struct SceneManifest {
    std::filesystem::path root;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    double near_plane = 0.01, far_plane = 100.0;
    DepthMode depth_mode = DepthMode::Binocular;
    /// Scene units per 16-bit depth code.
    double depth_scale = 1.0 / 1000.0;
    TimeMode time_mode = TimeMode::Index;
    std::vector<FrameEntry> frames;

    Camera<float> camera(std::size_t frame) const;
};

SceneManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const SceneManifest& manifest);

/// True for test frames: the middle frame of every block of 8 (7:1 split).
inline bool is_test_frame(int index) { return index % 8 == 4; }

struct Scene {
    SceneManifest manifest;
    std::vector<FrameRecord> frames;
    std::vector<int> train;
    std::vector<int> test;

    std::vector<FrameRecord> train_frames() const;
    std::vector<FrameRecord> test_frames() const;
};

/// Normalized times for a manifest; throws IoError naming the first frame
/// whose timestamp does not increase.
std::vector<float> normalized_times(const SceneManifest& manifest);

/// Loads every frame (in parallel) and applies the 7:1 split. Errors name the
/// offending frame.
Scene load_scene(const std::filesystem::path& manifest_path, const ExecPolicy& exec = {});

} // namespace dynsplat
