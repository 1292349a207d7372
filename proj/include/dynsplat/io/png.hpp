#pragma once

#include "dynsplat/core/image.hpp"

#include <cstdint>
#include <filesystem>

namespace dynsplat {

/// 8-bit code to [0, 1]; shared by every reader so round trips are exact.
inline float unit_from_byte(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }
std::uint8_t byte_from_unit(float v);

/// 16-bit code times `scale` (scene units per code).
inline float depth_from_code(std::uint16_t code, double scale) {
    return static_cast<float>(static_cast<double>(code) * scale);
}
std::uint16_t code_from_depth(double depth, double scale);

/// 8-bit RGB (gray and alpha inputs are converted) to H x W x 3 in [0, 1].
Image read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const Image& image);

/// 16-bit grayscale, value = code * scale.
Raster<float> read_png_depth(const std::filesystem::path& path, double scale);
void write_png_depth(const std::filesystem::path& path, const Raster<float>& depth, double scale);

/// 8-bit grayscale; nonzero reads as 1.
Raster<std::uint8_t> read_png_mask(const std::filesystem::path& path);
void write_png_mask(const std::filesystem::path& path, const Raster<std::uint8_t>& mask);

} // namespace dynsplat
