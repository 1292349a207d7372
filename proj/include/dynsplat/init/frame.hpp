#pragma once

#include "dynsplat/core/camera.hpp"
#include "dynsplat/core/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dynsplat {

enum class DepthMode {
    Binocular, ///< metric depth from a stereo pair
    Monocular, ///< relative (scale-free) depth from a single view
};

std::string to_string(DepthMode mode);
DepthMode depth_mode_from_string(const std::string& s);

/// One timestep of an input sequence.
struct FrameRecord {
    Image image;                   ///< H x W x 3 in [0, 1]
    Raster<float> depth;           ///< H x W
    Raster<std::uint8_t> mask;     ///< H x W, 1 = tissue kept, 0 = tool pixel
    Camera<float> camera;
    float time = 0.0f;             ///< normalized to [0, 1]
    int index = 0;                 ///< position in the source sequence

    int width() const { return image.width; }
    int height() const { return image.height; }
    std::size_t kept_pixels() const;

    /// Throws ConfigError if rasters disagree in size with each other or the
    /// camera, or if kept pixels carry negative depth.
    void validate() const;
};

} // namespace dynsplat
