#pragma once

#include "dynsplat/core/gaussian_cloud.hpp"
#include "dynsplat/deform/deformation.hpp"
#include "dynsplat/init/frame.hpp"
#include "dynsplat/loss/losses.hpp"
#include "dynsplat/raster/rasterizer.hpp"
#include "dynsplat/train/adam.hpp"
#include "dynsplat/train/config.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dynsplat {

class TrainingError : public Error {
public:
    using Error::Error;
};

/// Incompatible or corrupt checkpoint.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Accumulated screen-space position gradients for densification.
struct DensifyStats {
    std::vector<float> grad_accum;
    std::vector<std::uint32_t> visible;

    void reset(std::size_t count) {
        grad_accum.assign(count, 0.0f);
        visible.assign(count, 0);
    }
};

/// Everything a training run mutates. `config` is fully resolved: the depth
/// mode and the positional-MLP width are fixed at initialization.
struct TrainState {
    TrainConfig config;
    DepthMode depth_mode = DepthMode::Binocular;
    GaussianCloud<float> cloud;
    GaussianCloud<float> cloud_grads;
    DeformationField<float> field;
    Adam<float> optimizer;
    std::uint64_t iteration = 0;
    /// Scene extent used by densification (diagonal of the field bounds).
    double scene_extent = 1.0;
    DensifyStats densify;

    bool in_warmup() const { return iteration < static_cast<std::uint64_t>(config.warmup_iters); }
};

/// Builds the canonical cloud (holistic or random) from the training frames
/// and a fresh deformation field bounded by the holistic cloud expanded by 10%.
TrainState initialize_state(const TrainConfig& config, const std::vector<FrameRecord>& train_frames,
                            DepthMode scene_depth_mode);

/// Index into the training frames used at `iteration`: a seeded shuffle per
/// epoch, a pure function of (seed, iteration).
std::size_t frame_for_iteration(std::uint64_t seed, std::size_t frame_count, std::uint64_t iteration);

/// One optimization step on `frame`. Throws TrainingError (after dumping the
/// state when configured) if the loss is not finite.
LossReport train_step(TrainState& state, const FrameRecord& frame, Rasterizer<float>& rasterizer);

/// Clone, split and prune per the densify config. Returns the number of
/// Gaussians added minus removed.
long densify_and_prune(TrainState& state, std::uint64_t seed);

/// Renders the state at time t (deformation applied) through `camera`.
RenderOutput<float> render_state(const TrainState& state, const Camera<float>& camera, float t);

struct FrameMetrics {
    int index = 0;
    float time = 0;
    double psnr = 0;
    double ssim = 0;
    double psnr_unmasked = 0;
    double ssim_unmasked = 0;
};

struct EvalReport {
    std::vector<FrameMetrics> frames;
    double mean_psnr = 0;
    double mean_ssim = 0;
    double mean_psnr_unmasked = 0;
    double mean_ssim_unmasked = 0;

    std::string table() const;
};

EvalReport evaluate_images(const std::vector<Image>& predictions, const std::vector<FrameRecord>& frames);
EvalReport evaluate(const TrainState& state, const std::vector<FrameRecord>& frames);

/// Writes the state atomically (temporary file, then rename).
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// Reads a checkpoint. With `expected`, its structure hash must match.
TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig* expected = nullptr);

/// Drives train_step over shuffled training frames.
class Trainer {
public:
    Trainer(TrainConfig config, std::vector<FrameRecord> train_frames, DepthMode scene_depth_mode);
    Trainer(TrainState state, std::vector<FrameRecord> train_frames);

    TrainState& state() { return state_; }
    const TrainState& state() const { return state_; }
    bool done() const { return state_.iteration >= static_cast<std::uint64_t>(state_.config.total_iters); }

    LossReport step();
    /// Steps until iteration `until` (or the end), calling `on_step` after each.
    void run(std::uint64_t until, const std::function<void(const LossReport&)>& on_step = {});

    /// Mean wall time per step, split by phase.
    double mean_warmup_seconds() const { return warmup_steps_ ? warmup_seconds_ / warmup_steps_ : 0.0; }
    double mean_joint_seconds() const { return joint_steps_ ? joint_seconds_ / joint_steps_ : 0.0; }

private:
    TrainState state_;
    std::vector<FrameRecord> frames_;
    Rasterizer<float> rasterizer_;
    double warmup_seconds_ = 0, joint_seconds_ = 0;
    long warmup_steps_ = 0, joint_steps_ = 0;
};

} // namespace dynsplat
