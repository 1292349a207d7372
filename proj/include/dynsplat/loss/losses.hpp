#pragma once

#include "dynsplat/core/image.hpp"
#include "dynsplat/core/types.hpp"
#include "dynsplat/deform/hexplane.hpp"
#include "dynsplat/init/frame.hpp"

#include <cstdint>
#include <string>

namespace dynsplat {

inline constexpr double kDepthEpsilon = 1e-6;
inline constexpr double kPearsonEpsilon = 1e-8;

template <typename T> struct LossValue {
    T value = 0;
    /// Set when the term is undefined on its input (empty mask, constant depth).
    bool degenerate = false;
};

// Every loss below takes an optional gradient raster shaped like the
// prediction; when present, scale * dL/dprediction is added to it. An empty
// mask raster keeps every pixel; otherwise nonzero entries are kept.

/// Mean over kept pixels and channels of |pred - target|.
template <typename T>
LossValue<T> loss_color(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                        Raster<T>* grad = nullptr, T scale = T(1));

/// Mean over kept pixels of |1/(pred + eps) - 1/(target + eps)|.
template <typename T>
LossValue<T> loss_depth_binocular(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                                  Raster<T>* grad = nullptr, T scale = T(1));

/// 1 - cov(pred, target) / sqrt(var(pred) var(target) + 1e-8) over kept pixels.
/// Returns 1 with the degenerate flag when either variance vanishes or fewer
/// than two pixels are kept.
template <typename T>
LossValue<T> loss_depth_monocular(const Raster<T>& pred, const Raster<T>& target, const Raster<std::uint8_t>& mask,
                                  Raster<T>* grad = nullptr, T scale = T(1));

/// Mean absolute difference over every horizontal and vertical neighbour pair
/// and channel.
template <typename T> T total_variation(const Raster<T>& image, Raster<T>* grad = nullptr, T scale = T(1));

/// TV(color) + TV(1 / (depth + eps)), over the full image.
template <typename T>
T loss_spatial_tv(const Raster<T>& color, const Raster<T>& depth, Raster<T>* d_color = nullptr,
                  Raster<T>* d_depth = nullptr, T scale = T(1));

/// Sum over levels and the XT, YT, ZT planes of the mean squared difference
/// between adjacent time columns. With accumulate_grads, scale * dL/dnode is
/// added to the plane gradients.
template <typename T> T loss_temporal_tv(HexPlaneField<T>& field, bool accumulate_grads = false, T scale = T(1));

struct LossWeights {
    double color = 1.0;
    double depth = 1.0;
    double spatial_tv = 0.01;
    double temporal_tv = 0.01;
    DepthMode depth_mode = DepthMode::Binocular;

    /// Defaults for a depth mode: depth weight 1 (binocular) or 0.1 (monocular).
    static LossWeights defaults(DepthMode mode);
    void validate() const;
};

/// Unweighted term values fed to total_loss.
struct LossTerms {
    double color = 0;
    double depth = 0;
    double spatial_tv = 0;
    double temporal_tv = 0;
};

struct LossReport {
    LossTerms terms;
    double total = 0;
    bool color_degenerate = false;
    bool depth_degenerate = false;

    static std::string csv_header();
    std::string csv_row(long iteration) const;
};

LossReport total_loss(const LossTerms& terms, const LossWeights& weights);

} // namespace dynsplat
