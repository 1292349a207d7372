#pragma once

#include "dynsplat/core/image.hpp"

#include <cstdint>

namespace dynsplat {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over kept pixels and channels for images in [0, 1];
/// capped at kPsnrCap. An empty mask keeps every pixel.
double psnr(const Image& pred, const Image& target, const Raster<std::uint8_t>& mask = {});

/// Mean SSIM (11 x 11 Gaussian window, sigma 1.5, K1 = 0.01, K2 = 0.03, unit
/// dynamic range) over channels and kept pixels. The window is truncated at
/// the image border and renormalized.
double ssim(const Image& pred, const Image& target, const Raster<std::uint8_t>& mask = {});

} // namespace dynsplat
