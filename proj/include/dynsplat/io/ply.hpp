#pragma once

#include "dynsplat/init/initializer.hpp"

#include <filesystem>

namespace dynsplat {

/// Binary little-endian PLY with float x, y, z and uchar red, green, blue.
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

} // namespace dynsplat
