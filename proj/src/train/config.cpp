#include "dynsplat/train/config.hpp"

#include <cmath>
#include <cstdio>

namespace dynsplat {

std::string to_string(InitMode mode) { return mode == InitMode::Holistic ? "holistic" : "random"; }

InitMode init_mode_from_string(const std::string& s) {
    if (s == "holistic") return InitMode::Holistic;
    if (s == "random") return InitMode::Random;
    throw ConfigError("unknown init mode '" + s + "' (expected holistic or random)");
}

void TrainConfig::validate() const {
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (warmup_iters < 0 || total_iters < 1 || warmup_iters >= total_iters)
        throw ConfigError("need 0 <= warmup_iters < total_iters");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0, 1)");
    for (double m : {lr.positions, lr.positions_final, lr.rotations, lr.scales, lr.opacity, lr.sh, lr.hexplane,
                     lr.decoders})
        if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("learning-rate multipliers must be finite and >= 0");
    loss.validate();
    if (!(init.keep_fraction > 0.0 && init.keep_fraction <= 1.0)) throw ConfigError("keep_fraction must lie in (0, 1]");
    if (init.random_count < 0) throw ConfigError("init.random_count must be >= 0");
    if (init.gaussians.sh_degree < 0 || init.gaussians.sh_degree > kMaxShDegree)
        throw ConfigError("SH degree must lie in [0, 3]");
    if (!(init.gaussians.initial_opacity > 0.0 && init.gaussians.initial_opacity < 1.0))
        throw ConfigError("initial opacity must lie in (0, 1)");
    deformation.hexplane.validate();
    deformation.positional.validate();
    if (densify.interval < 1) throw ConfigError("densify.interval must be >= 1");
    raster.validate();
}

void TrainConfig::apply(const KeyValueConfig& c) {
    seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(seed)));
    threads = static_cast<int>(c.get_int("threads", threads));
    deterministic = c.get_bool("deterministic", deterministic);

    warmup_iters = static_cast<int>(c.get_int("train.warmup_iters", warmup_iters));
    total_iters = static_cast<int>(c.get_int("train.total_iters", total_iters));
    adam.lr = c.get_double("train.lr", adam.lr);
    adam.beta1 = c.get_double("train.beta1", adam.beta1);
    adam.beta2 = c.get_double("train.beta2", adam.beta2);
    adam.eps = c.get_double("train.eps", adam.eps);
    eval_interval = static_cast<int>(c.get_int("train.eval_interval", eval_interval));
    checkpoint_interval = static_cast<int>(c.get_int("train.checkpoint_interval", checkpoint_interval));
    nan_dump_path = c.get_string("train.nan_dump", nan_dump_path);

    lr.positions = c.get_double("lr.positions", lr.positions);
    lr.positions_final = c.get_double("lr.positions_final", lr.positions_final);
    lr.rotations = c.get_double("lr.rotations", lr.rotations);
    lr.scales = c.get_double("lr.scales", lr.scales);
    lr.opacity = c.get_double("lr.opacity", lr.opacity);
    lr.sh = c.get_double("lr.sh", lr.sh);
    lr.hexplane = c.get_double("lr.hexplane", lr.hexplane);
    lr.decoders = c.get_double("lr.decoders", lr.decoders);

    loss.color = c.get_double("loss.color", loss.color);
    if (c.contains("loss.depth")) depth_weight = c.get_double("loss.depth", 1.0);
    loss.spatial_tv = c.get_double("loss.spatial_tv", loss.spatial_tv);
    loss.temporal_tv = c.get_double("loss.temporal_tv", loss.temporal_tv);
    const std::string mode = c.get_string("loss.depth_mode", depth_mode_override ? to_string(*depth_mode_override) : "auto");
    if (mode == "auto") depth_mode_override.reset();
    else depth_mode_override = depth_mode_from_string(mode);

    init.mode = init_mode_from_string(c.get_string("init.mode", to_string(init.mode)));
    init.keep_fraction = c.get_double("init.keep_fraction", init.keep_fraction);
    init.random_count = static_cast<int>(c.get_int("init.random_count", init.random_count));
    init.gaussians.sh_degree = static_cast<int>(c.get_int("init.sh_degree", init.gaussians.sh_degree));
    init.gaussians.initial_opacity = c.get_double("init.opacity", init.gaussians.initial_opacity);
    init.gaussians.fallback_log_scale = c.get_double("init.fallback_log_scale", init.gaussians.fallback_log_scale);

    auto& d = deformation;
    d.encoder = encoder_kind_from_string(c.get_string("deform.encoder", to_string(d.encoder)));
    d.hexplane.levels = static_cast<int>(c.get_int("hexplane.levels", d.hexplane.levels));
    d.hexplane.base_spatial = static_cast<int>(c.get_int("hexplane.base_spatial", d.hexplane.base_spatial));
    d.hexplane.base_temporal = static_cast<int>(c.get_int("hexplane.base_temporal", d.hexplane.base_temporal));
    d.hexplane.spatial_growth = static_cast<int>(c.get_int("hexplane.spatial_growth", d.hexplane.spatial_growth));
    d.hexplane.temporal_growth = static_cast<int>(c.get_int("hexplane.temporal_growth", d.hexplane.temporal_growth));
    d.hexplane.channels = static_cast<int>(c.get_int("hexplane.channels", d.hexplane.channels));
    d.hexplane.init_low = c.get_double("hexplane.init_low", d.hexplane.init_low);
    d.hexplane.init_high = c.get_double("hexplane.init_high", d.hexplane.init_high);
    d.positional.frequencies = static_cast<int>(c.get_int("posmlp.frequencies", d.positional.frequencies));
    d.positional.width = static_cast<int>(c.get_int("posmlp.width", d.positional.width));
    d.positional.hidden_layers = static_cast<int>(c.get_int("posmlp.hidden_layers", d.positional.hidden_layers));
    d.positional.out_features = static_cast<int>(c.get_int("posmlp.out_features", d.positional.out_features));
    match_mlp_budget = c.get_bool("posmlp.match_budget", match_mlp_budget);
    d.decoder.hidden_width = static_cast<int>(c.get_int("decoder.hidden_width", d.decoder.hidden_width));
    d.decoder.shared_trunk = c.get_bool("decoder.shared_trunk", d.decoder.shared_trunk);
    d.decoder.trunk_width = static_cast<int>(c.get_int("decoder.trunk_width", d.decoder.trunk_width));

    densify.enabled = c.get_bool("densify.enabled", densify.enabled);
    densify.interval = static_cast<int>(c.get_int("densify.interval", densify.interval));
    densify.until = static_cast<int>(c.get_int("densify.until", densify.until));
    densify.grad_threshold = c.get_double("densify.grad_threshold", densify.grad_threshold);
    densify.prune_opacity = c.get_double("densify.prune_opacity", densify.prune_opacity);
    densify.percent_dense = c.get_double("densify.percent_dense", densify.percent_dense);

    raster.tile_size = static_cast<int>(c.get_int("raster.tile_size", raster.tile_size));
    raster.dilation = c.get_double("raster.dilation", raster.dilation);
    raster.alpha_cutoff = c.get_double("raster.alpha_cutoff", raster.alpha_cutoff);
    raster.max_alpha = c.get_double("raster.max_alpha", raster.max_alpha);
    raster.stop_transmittance = c.get_double("raster.stop_transmittance", raster.stop_transmittance);
    raster.background[0] = c.get_double("raster.background_r", raster.background[0]);
    raster.background[1] = c.get_double("raster.background_g", raster.background[1]);
    raster.background[2] = c.get_double("raster.background_b", raster.background[2]);
    raster.exec = exec();
}

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

KeyValueConfig TrainConfig::to_kv() const {
    KeyValueConfig c;
    auto i = [&](const char* k, long long v) { c.set(k, std::to_string(v)); };
    auto d = [&](const char* k, double v) { c.set(k, num(v)); };
    auto b = [&](const char* k, bool v) { c.set(k, v ? "true" : "false"); };
    i("seed", static_cast<long long>(seed));
    i("threads", threads);
    b("deterministic", deterministic);
    i("train.warmup_iters", warmup_iters);
    i("train.total_iters", total_iters);
    d("train.lr", adam.lr);
    d("train.beta1", adam.beta1);
    d("train.beta2", adam.beta2);
    d("train.eps", adam.eps);
    i("train.eval_interval", eval_interval);
    i("train.checkpoint_interval", checkpoint_interval);
    if (!nan_dump_path.empty()) c.set("train.nan_dump", nan_dump_path);
    d("lr.positions", lr.positions);
    d("lr.positions_final", lr.positions_final);
    d("lr.rotations", lr.rotations);
    d("lr.scales", lr.scales);
    d("lr.opacity", lr.opacity);
    d("lr.sh", lr.sh);
    d("lr.hexplane", lr.hexplane);
    d("lr.decoders", lr.decoders);
    d("loss.color", loss.color);
    if (depth_weight) d("loss.depth", *depth_weight);
    d("loss.spatial_tv", loss.spatial_tv);
    d("loss.temporal_tv", loss.temporal_tv);
    c.set("loss.depth_mode", depth_mode_override ? to_string(*depth_mode_override) : "auto");
    c.set("init.mode", to_string(init.mode));
    d("init.keep_fraction", init.keep_fraction);
    i("init.random_count", init.random_count);
    i("init.sh_degree", init.gaussians.sh_degree);
    d("init.opacity", init.gaussians.initial_opacity);
    d("init.fallback_log_scale", init.gaussians.fallback_log_scale);
    const auto& df = deformation;
    c.set("deform.encoder", to_string(df.encoder));
    i("hexplane.levels", df.hexplane.levels);
    i("hexplane.base_spatial", df.hexplane.base_spatial);
    i("hexplane.base_temporal", df.hexplane.base_temporal);
    i("hexplane.spatial_growth", df.hexplane.spatial_growth);
    i("hexplane.temporal_growth", df.hexplane.temporal_growth);
    i("hexplane.channels", df.hexplane.channels);
    d("hexplane.init_low", df.hexplane.init_low);
    d("hexplane.init_high", df.hexplane.init_high);
    i("posmlp.frequencies", df.positional.frequencies);
    i("posmlp.width", df.positional.width);
    i("posmlp.hidden_layers", df.positional.hidden_layers);
    i("posmlp.out_features", df.positional.out_features);
    b("posmlp.match_budget", match_mlp_budget);
    i("decoder.hidden_width", df.decoder.hidden_width);
    b("decoder.shared_trunk", df.decoder.shared_trunk);
    i("decoder.trunk_width", df.decoder.trunk_width);
    b("densify.enabled", densify.enabled);
    i("densify.interval", densify.interval);
    i("densify.until", densify.until);
    d("densify.grad_threshold", densify.grad_threshold);
    d("densify.prune_opacity", densify.prune_opacity);
    d("densify.percent_dense", densify.percent_dense);
    i("raster.tile_size", raster.tile_size);
    d("raster.dilation", raster.dilation);
    d("raster.alpha_cutoff", raster.alpha_cutoff);
    d("raster.max_alpha", raster.max_alpha);
    d("raster.stop_transmittance", raster.stop_transmittance);
    d("raster.background_r", raster.background[0]);
    d("raster.background_g", raster.background[1]);
    d("raster.background_b", raster.background[2]);
    return c;
}

std::uint64_t TrainConfig::structure_hash() const {
    const auto& df = deformation;
    std::string s = "sh=" + std::to_string(init.gaussians.sh_degree) + ";enc=" + to_string(df.encoder);
    if (df.encoder == EncoderKind::HexPlane) {
        const auto& h = df.hexplane;
        s += ";hp=" + std::to_string(h.levels) + "," + std::to_string(h.base_spatial) + "," +
             std::to_string(h.base_temporal) + "," + std::to_string(h.spatial_growth) + "," +
             std::to_string(h.temporal_growth) + "," + std::to_string(h.channels);
    } else {
        const auto& p = df.positional;
        s += ";pm=" + std::to_string(p.frequencies) + "," + std::to_string(p.width) + "," +
             std::to_string(p.hidden_layers) + "," + std::to_string(p.out_features);
    }
    s += ";dec=" + std::to_string(df.decoder.hidden_width) + "," + std::to_string(df.decoder.shared_trunk) + "," +
         std::to_string(df.decoder.shared_trunk ? df.decoder.trunk_width : 0);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double TrainConfig::lr_multiplier(const std::string& block, std::uint64_t iteration) const {
    auto starts = [&](const char* prefix) { return block.rfind(prefix, 0) == 0; };
    if (block == "gaussians.positions") {
        if (lr.positions <= 0.0 || lr.positions_final <= 0.0) return 0.0;
        const double span = std::max(1, total_iters - 1);
        const double f = std::clamp(static_cast<double>(iteration) / span, 0.0, 1.0);
        return std::exp((1.0 - f) * std::log(lr.positions) + f * std::log(lr.positions_final));
    }
    if (block == "gaussians.rotations") return lr.rotations;
    if (block == "gaussians.log_scales") return lr.scales;
    if (block == "gaussians.opacity_logits") return lr.opacity;
    if (block == "gaussians.sh_coeffs") return lr.sh;
    if (starts("hexplane.") || starts("posmlp.")) return lr.hexplane;
    if (starts("decoder.")) return lr.decoders;
    throw ConfigError("no learning rate group for parameter block '" + block + "'");
}

} // namespace dynsplat
