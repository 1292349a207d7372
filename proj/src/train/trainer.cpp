#include "dynsplat/train/trainer.hpp"

#include "dynsplat/core/geometry.hpp"
#include "dynsplat/init/initializer.hpp"
#include "dynsplat/train/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace dynsplat {

namespace {

/// Field bounds: the box grown by 10% per side, with a floor so flat clouds
/// still give a non-degenerate box.
BoundingBox field_bounds(const BoundingBox& b) {
    const Eigen::Vector3d ext = b.extent();
    const double floor = 0.01 * std::max(ext.maxCoeff(), 1e-6);
    const Eigen::Vector3d pad = (0.1 * ext).cwiseMax(Eigen::Vector3d::Constant(floor));
    return {b.lo - pad, b.hi + pad};
}

template <typename V> bool all_finite(const std::vector<V>& v) {
    return std::all_of(v.begin(), v.end(), [](V x) { return std::isfinite(x); });
}

bool cloud_finite(const GaussianCloud<float>& c) {
    return all_finite(c.positions) && all_finite(c.rotations) && all_finite(c.log_scales) &&
           all_finite(c.opacity_logits) && all_finite(c.sh_coeffs);
}

Raster<std::uint8_t> depth_mask(const FrameRecord& frame) {
    Raster<std::uint8_t> m = frame.mask;
    for (std::size_t p = 0; p < m.data.size(); ++p)
        if (!(frame.depth.data[p] > 0.0f)) m.data[p] = 0;
    return m;
}

[[noreturn]] void abort_training(const TrainState& state, const FrameRecord& frame, const std::string& what) {
    std::string msg = "non-finite " + what + " at iteration " + std::to_string(state.iteration) + " (frame " +
                      std::to_string(frame.index) + ")";
    if (!state.config.nan_dump_path.empty()) {
        try {
            save_checkpoint(state, state.config.nan_dump_path);
            msg += "; state dumped to " + state.config.nan_dump_path;
        } catch (const std::exception& e) {
            msg += std::string("; state dump failed: ") + e.what();
        }
    }
    throw TrainingError(msg);
}

} // namespace

TrainState initialize_state(const TrainConfig& config, const std::vector<FrameRecord>& train_frames,
                            DepthMode scene_depth_mode) {
    config.validate();
    if (train_frames.empty()) throw InitializationError("no training frames");
    TrainState s;
    s.config = config;
    s.depth_mode = config.depth_mode_override.value_or(scene_depth_mode);
    s.config.depth_mode_override = s.depth_mode;
    const LossWeights defaults = LossWeights::defaults(s.depth_mode);
    s.config.loss.depth_mode = s.depth_mode;
    s.config.loss.depth = config.depth_weight.value_or(defaults.depth);
    s.config.depth_weight = s.config.loss.depth;
    s.config.raster.exec = config.exec();

    const auto clouds = reproject_frames(train_frames, config.exec());
    const PointCloud holistic = combine_holistic(clouds, config.init.keep_fraction, config.seed);
    const BoundingBox bounds = field_bounds(holistic.bounds());
    if (config.init.mode == InitMode::Holistic) {
        s.cloud = instantiate_gaussians<float>(holistic, config.init.gaussians);
    } else {
        const std::size_t count = config.init.random_count > 0 ? static_cast<std::size_t>(config.init.random_count)
                                                               : holistic.size();
        s.cloud = random_init<float>(count, bounds, config.seed, config.init.gaussians);
    }

    if (config.match_mlp_budget && config.deformation.encoder == EncoderKind::PositionalMlp) {
        const std::size_t budget = HexPlaneField<float>::expected_parameter_count(config.deformation.hexplane);
        s.config.deformation.positional.width =
            PositionalMlpEncoder<float>::width_for_budget(config.deformation.positional, budget);
        s.config.match_mlp_budget = false;
    }
    s.field = DeformationField<float>(s.config.deformation, bounds, config.seed ^ 0x6669656c64ULL);
    s.optimizer = Adam<float>(config.adam);
    s.cloud_grads = s.cloud.zeros_like();
    s.scene_extent = bounds.extent().norm();
    s.densify.reset(s.cloud.size());
    spdlog::debug("initialized {} Gaussians ({} init), deformation parameters {}", s.cloud.size(),
                  to_string(config.init.mode), s.field.parameter_count());
    return s;
}

std::size_t frame_for_iteration(std::uint64_t seed, std::size_t frame_count, std::uint64_t iteration) {
    if (frame_count == 0) throw ConfigError("no frames to sample");
    const std::uint64_t epoch = iteration / frame_count;
    std::vector<std::size_t> order(frame_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
    std::shuffle(order.begin(), order.end(), rng);
    return order[static_cast<std::size_t>(iteration % frame_count)];
}

LossReport train_step(TrainState& state, const FrameRecord& frame, Rasterizer<float>& rasterizer) {
    const TrainConfig& cfg = state.config;
    const bool warm = state.in_warmup();
    const ExecPolicy exec = cfg.exec();
    rasterizer.config() = cfg.raster;
    rasterizer.config().exec = exec;

    DeformationCache<float> cache;
    GaussianCloud<float> deformed;
    if (!warm) deformed = state.field.deform(state.cloud, frame.time, &cache, exec);
    const GaussianCloud<float>& rendered = warm ? state.cloud : deformed;
    const RenderOutput<float> out = rasterizer.forward(rendered, frame.camera);

    const int w = frame.width(), h = frame.height();
    Raster<float> d_color(w, h, 3), d_depth(w, h, 1);
    const LossWeights& lw = cfg.loss;
    LossTerms terms;
    const auto color = loss_color(out.color, frame.image, frame.mask, &d_color, static_cast<float>(lw.color));
    terms.color = color.value;
    const Raster<std::uint8_t> dmask = depth_mask(frame);
    const auto depth = state.depth_mode == DepthMode::Binocular
                           ? loss_depth_binocular(out.depth, frame.depth, dmask, &d_depth, static_cast<float>(lw.depth))
                           : loss_depth_monocular(out.depth, frame.depth, dmask, &d_depth, static_cast<float>(lw.depth));
    terms.depth = depth.value;
    terms.spatial_tv = loss_spatial_tv(out.color, out.depth, &d_color, &d_depth, static_cast<float>(lw.spatial_tv));

    if (!warm) state.field.zero_grad();
    if (state.field.encoder_kind() == EncoderKind::HexPlane)
        terms.temporal_tv = loss_temporal_tv(state.field.hexplane(), !warm, static_cast<float>(lw.temporal_tv));

    LossReport report = total_loss(terms, lw);
    report.color_degenerate = color.degenerate;
    report.depth_degenerate = depth.degenerate;
    if (!std::isfinite(report.total)) abort_training(state, frame, "loss");

    GaussianCloud<float> grads = rasterizer.backward(rendered, frame.camera, d_color, d_depth);
    if (warm) {
        state.cloud_grads = std::move(grads);
    } else {
        state.cloud_grads = state.cloud.zeros_like();
        state.field.backward(cache, grads, state.cloud_grads, exec);
    }
    if (!cloud_finite(state.cloud_grads)) abort_training(state, frame, "gradient");

    const std::uint64_t it = state.iteration;
    auto multiplier = [&](const std::string& name) { return cfg.lr_multiplier(name, it); };
    state.optimizer.step(state.cloud.parameter_blocks(state.cloud_grads), multiplier);
    if (!warm) state.optimizer.step(state.field.parameter_blocks(), multiplier);
    state.cloud.normalize_rotations();

    if (cfg.densify.enabled) {
        const auto& norms = rasterizer.screen_grad_norms();
        for (const auto& p : rasterizer.state().projected) {
            const auto id = static_cast<std::size_t>(p.gaussian_id);
            state.densify.grad_accum[id] += norms[id];
            state.densify.visible[id] += 1;
        }
    }
    ++state.iteration;
    const auto& d = cfg.densify;
    if (d.enabled && !state.in_warmup() && state.iteration % static_cast<std::uint64_t>(d.interval) == 0 &&
        (d.until <= 0 || state.iteration < static_cast<std::uint64_t>(d.until)))
        densify_and_prune(state, cfg.seed ^ state.iteration);
    return report;
}

long densify_and_prune(TrainState& state, std::uint64_t seed) {
    GaussianCloud<float>& cloud = state.cloud;
    const std::size_t n = cloud.size();
    const auto& d = state.config.densify;
    if (state.densify.grad_accum.size() != n) state.densify.reset(n);
    const double size_threshold = d.percent_dense * state.scene_extent;

    std::vector<bool> keep(n, true);
    std::vector<std::size_t> clones, splits;
    for (std::size_t i = 0; i < n; ++i) {
        const auto vis = state.densify.visible[i];
        if (vis == 0) continue;
        if (state.densify.grad_accum[i] / static_cast<float>(vis) < d.grad_threshold) continue;
        const double max_scale = std::exp(static_cast<double>(cloud.log_scale(i).maxCoeff()));
        if (max_scale <= size_threshold) clones.push_back(i);
        else {
            splits.push_back(i);
            keep[i] = false;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (sigmoid(static_cast<double>(cloud.opacity_logits[i])) < d.prune_opacity) keep[i] = false;
    if (std::none_of(keep.begin(), keep.end(), [](bool k) { return k; }) && clones.empty() && splits.empty()) {
        const auto best = std::max_element(cloud.opacity_logits.begin(), cloud.opacity_logits.end());
        keep[static_cast<std::size_t>(best - cloud.opacity_logits.begin())] = true;
    }

    GaussianCloud<float> added(0, cloud.sh_degree);
    for (std::size_t i : clones) added.append_from(cloud, i);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    const float shrink = std::log(1.6f);
    for (std::size_t i : splits) {
        const Mat3<float> r = quaternion_to_rotation<float>(normalize_quaternion<float>(cloud.rotation(i)));
        const Vec3<float> s = cloud.log_scale(i).array().exp();
        for (int k = 0; k < 2; ++k) {
            added.append_from(cloud, i);
            const std::size_t j = added.size() - 1;
            const Vec3<float> z(normal(rng), normal(rng), normal(rng));
            added.position(j) += r * s.cwiseProduct(z);
            added.log_scale(j).array() -= shrink;
        }
    }

    const std::size_t removed = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
    GaussianCloud<float> grads_layout = cloud.zeros_like();
    for (const auto& b : cloud.parameter_blocks(grads_layout))
        state.optimizer.remap(b.name, b.item_width, keep, added.size());
    cloud.filter(keep);
    for (std::size_t i = 0; i < added.size(); ++i) cloud.append_from(added, i);
    state.cloud_grads = cloud.zeros_like();
    state.densify.reset(cloud.size());
    return static_cast<long>(added.size()) - static_cast<long>(removed);
}

RenderOutput<float> render_state(const TrainState& state, const Camera<float>& camera, float t) {
    const ExecPolicy exec = state.config.exec();
    const GaussianCloud<float> deformed = state.field.deform(state.cloud, t, nullptr, exec);
    RasterConfig rc = state.config.raster;
    rc.exec = exec;
    return render(project(deformed, camera, rc), camera, rc);
}

std::string EvalReport::table() const {
    std::string out = "frame      t     psnr    ssim  psnr_all  ssim_all\n";
    char buf[128];
    for (const auto& f : frames) {
        std::snprintf(buf, sizeof buf, "%5d  %5.3f  %7.3f  %6.4f  %8.3f  %8.4f\n", f.index, f.time, f.psnr, f.ssim,
                      f.psnr_unmasked, f.ssim_unmasked);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, " mean         %7.3f  %6.4f  %8.3f  %8.4f\n", mean_psnr, mean_ssim,
                  mean_psnr_unmasked, mean_ssim_unmasked);
    return out + buf;
}

EvalReport evaluate_images(const std::vector<Image>& predictions, const std::vector<FrameRecord>& frames) {
    if (frames.empty()) throw ConfigError("evaluation needs at least one frame");
    if (predictions.size() != frames.size()) throw ConfigError("evaluation: prediction and frame counts differ");
    EvalReport r;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        const auto& f = frames[k];
        FrameMetrics m;
        m.index = f.index;
        m.time = f.time;
        m.psnr = psnr(predictions[k], f.image, f.mask);
        m.ssim = ssim(predictions[k], f.image, f.mask);
        m.psnr_unmasked = psnr(predictions[k], f.image);
        m.ssim_unmasked = ssim(predictions[k], f.image);
        r.mean_psnr += m.psnr;
        r.mean_ssim += m.ssim;
        r.mean_psnr_unmasked += m.psnr_unmasked;
        r.mean_ssim_unmasked += m.ssim_unmasked;
        r.frames.push_back(m);
    }
    const double n = static_cast<double>(frames.size());
    r.mean_psnr /= n;
    r.mean_ssim /= n;
    r.mean_psnr_unmasked /= n;
    r.mean_ssim_unmasked /= n;
    return r;
}

EvalReport evaluate(const TrainState& state, const std::vector<FrameRecord>& frames) {
    std::vector<Image> preds;
    for (const auto& f : frames) preds.push_back(render_state(state, f.camera, f.time).color);
    return evaluate_images(preds, frames);
}

Trainer::Trainer(TrainConfig config, std::vector<FrameRecord> train_frames, DepthMode scene_depth_mode)
    : state_(initialize_state(config, train_frames, scene_depth_mode)), frames_(std::move(train_frames)) {}

Trainer::Trainer(TrainState state, std::vector<FrameRecord> train_frames)
    : state_(std::move(state)), frames_(std::move(train_frames)) {
    if (frames_.empty()) throw ConfigError("no training frames");
}

LossReport Trainer::step() {
    const FrameRecord& frame = frames_[frame_for_iteration(state_.config.seed, frames_.size(), state_.iteration)];
    const bool warm = state_.in_warmup();
    const auto t0 = std::chrono::steady_clock::now();
    LossReport r = train_step(state_, frame, rasterizer_);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (warm ? warmup_seconds_ : joint_seconds_) += dt;
    ++(warm ? warmup_steps_ : joint_steps_);
    return r;
}

void Trainer::run(std::uint64_t until, const std::function<void(const LossReport&)>& on_step) {
    until = std::min<std::uint64_t>(until, static_cast<std::uint64_t>(state_.config.total_iters));
    while (state_.iteration < until) {
        const LossReport r = step();
        if (on_step) on_step(r);
    }
}

} // namespace dynsplat
