#pragma once

#include "dynsplat/core/types.hpp"
#include "dynsplat/deform/mlp.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace dynsplat {

struct PositionalMlpConfig {
    /// Sin/cos octaves per input axis.
    int frequencies = 6;
    int width = 128;
    int hidden_layers = 3;
    /// Size of the latent feature handed to the decoders.
    int out_features = 32;

    int encoding_dim() const { return 4 + 8 * frequencies; }
    void validate() const;
};

template <typename T> struct PositionalMlpCache {
    std::size_t count = 0;
    MatX<T> coords;  ///< 4 x N normalized (x, y, z, t)
    std::vector<std::array<bool, 4>> clamped;
    MlpCache<T> mlp;
};

/// Baseline encoder: (x, y, z, t) mapped to [0, 1]^4, lifted by
/// gamma(p) = (p, sin(2^k pi p), cos(2^k pi p)) for k < frequencies and fed to
/// a ReLU MLP whose output is the latent feature.
template <typename T> class PositionalMlpEncoder {
public:
    PositionalMlpEncoder() = default;
    PositionalMlpEncoder(const PositionalMlpConfig& config, const BoundingBox& bounds, std::uint64_t seed);

    const PositionalMlpConfig& config() const { return config_; }
    int feature_dim() const { return config_.out_features; }
    std::size_t parameter_count() const { return mlp_.parameter_count(); }
    static std::size_t expected_parameter_count(const PositionalMlpConfig& config);
    /// Largest width whose parameter count does not exceed `budget` (at least 1).
    static int width_for_budget(PositionalMlpConfig config, std::size_t budget);

    MatX<T> encode(std::span<const T> positions, T t, PositionalMlpCache<T>* cache = nullptr) const;
    void backward(const PositionalMlpCache<T>& cache, const MatX<T>& d_features, std::span<T> d_positions);

    void zero_grad() { mlp_.zero_grad(); }
    std::vector<ParamBlock<T>> parameter_blocks() { return mlp_.parameter_blocks("posmlp"); }
    Mlp<T>& network() { return mlp_; }

private:
    PositionalMlpConfig config_;
    BoundingBox bounds_;
    Mlp<T> mlp_;
};

} // namespace dynsplat
