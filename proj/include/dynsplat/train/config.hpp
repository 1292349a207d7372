#pragma once

#include "dynsplat/deform/deformation.hpp"
#include "dynsplat/init/frame.hpp"
#include "dynsplat/init/initializer.hpp"
#include "dynsplat/io/kv_config.hpp"
#include "dynsplat/loss/losses.hpp"
#include "dynsplat/raster/rasterizer.hpp"
#include "dynsplat/train/adam.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace dynsplat {

enum class InitMode { Holistic, Random };

struct LearningRates {
    /// Position multiplier decays log-linearly from `positions` to
    /// `positions_final` over the run.
    double positions = 0.1;
    double positions_final = 0.01;
    double rotations = 1.0;
    double scales = 1.0;
    double opacity = 1.0;
    double sh = 1.0;
    double hexplane = 1.0;
    double decoders = 1.0;
};

struct DensifyConfig {
    bool enabled = false;
    int interval = 100;
    /// Last iteration (exclusive) at which densification runs; 0 means the
    /// whole run.
    int until = 0;
    /// Mean screen-space position gradient (per pixel) that triggers cloning
    /// or splitting.
    double grad_threshold = 2e-4;
    double prune_opacity = 0.005;
    /// Gaussians with max scale above this fraction of the scene extent are
    /// split; smaller ones are cloned.
    double percent_dense = 0.01;
};

struct InitConfig {
    InitMode mode = InitMode::Holistic;
    double keep_fraction = 0.001;
    /// Random-init count; 0 uses the holistic point count.
    int random_count = 0;
    GaussianInitOptions gaussians;
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    bool deterministic = true;

    int warmup_iters = 1000;
    int total_iters = 4000;
    AdamConfig adam;
    LearningRates lr;
    LossWeights loss;
    /// When unset, the depth mode comes from the scene.
    std::optional<DepthMode> depth_mode_override;
    /// When unset, the depth weight is LossWeights::defaults(depth mode).
    std::optional<double> depth_weight;
    InitConfig init;
    DeformationConfig deformation;
    /// Size the positional MLP so its parameter count does not exceed the
    /// HexPlane encoder of the same config.
    bool match_mlp_budget = false;
    DensifyConfig densify;
    RasterConfig raster;
    int eval_interval = 0;
    int checkpoint_interval = 0;
    /// Where a non-finite loss dumps the state; empty disables the dump.
    std::string nan_dump_path;

    ExecPolicy exec() const { return {threads, deterministic}; }
    void validate() const;

    /// Reads the keys it knows; the caller checks for leftovers with
    /// KeyValueConfig::require_all_used.
    void apply(const KeyValueConfig& config);
    /// Round-trips through apply() exactly.
    KeyValueConfig to_kv() const;
    /// FNV-1a hash of the fields that determine parameter shapes.
    std::uint64_t structure_hash() const;

    /// Learning-rate multiplier of a parameter block at an iteration.
    double lr_multiplier(const std::string& block, std::uint64_t iteration) const;
};

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& s);

} // namespace dynsplat
