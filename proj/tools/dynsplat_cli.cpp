#include "dynsplat/init/initializer.hpp"
#include "dynsplat/io/kv_config.hpp"
#include "dynsplat/io/ply.hpp"
#include "dynsplat/io/png.hpp"
#include "dynsplat/io/scene.hpp"
#include "dynsplat/io/synthetic.hpp"
#include "dynsplat/raster/rasterizer.hpp"
#include "dynsplat/train/config.hpp"
#include "dynsplat/train/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dynsplat;

namespace {

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<bool> deterministic;
    std::string config_path;
    bool verbose = false;
};

/// Config file values with the global flags layered on top.
KeyValueConfig load_config(const GlobalOptions& g) {
    KeyValueConfig kv = g.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config_path);
    if (g.seed) kv.set("seed", std::to_string(*g.seed));
    if (g.threads) kv.set("threads", std::to_string(*g.threads));
    if (g.deterministic) kv.set("deterministic", *g.deterministic ? "true" : "false");
    return kv;
}

TrainConfig train_config(const KeyValueConfig& kv) {
    TrainConfig cfg;
    cfg.apply(kv);
    SyntheticSpec ignored;
    ignored.apply(kv); // synth.* keys may share the file
    kv.require_all_used();
    cfg.validate();
    return cfg;
}

std::vector<FrameRecord> select(const Scene& scene, const std::string& split) {
    if (split == "test") return scene.test_frames();
    if (split == "train") return scene.train_frames();
    if (split == "all") return scene.frames;
    throw ConfigError("unknown split '" + split + "' (expected test, train or all)");
}

void write_metrics_json(const fs::path& path, const EvalReport& r) {
    nlohmann::json j;
    j["psnr"] = r.mean_psnr;
    j["ssim"] = r.mean_ssim;
    j["psnr_unmasked"] = r.mean_psnr_unmasked;
    j["ssim_unmasked"] = r.mean_ssim_unmasked;
    for (const auto& f : r.frames)
        j["frames"].push_back({{"index", f.index}, {"time", f.time}, {"psnr", f.psnr}, {"ssim", f.ssim},
                               {"psnr_unmasked", f.psnr_unmasked}, {"ssim_unmasked", f.ssim_unmasked}});
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

int cmd_synth(const GlobalOptions& g, const fs::path& out) {
    const KeyValueConfig kv = load_config(g);
    SyntheticSpec spec;
    spec.apply(kv);
    if (kv.contains("seed")) spec.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    TrainConfig ignored;
    ignored.apply(kv);
    kv.require_all_used();
    const auto exec = ExecPolicy{static_cast<int>(kv.get_int("threads", 1)), kv.get_bool("deterministic", true)};
    const SyntheticScene scene = generate_synthetic(spec, exec);
    const fs::path manifest = write_synthetic(scene, out);
    std::printf("wrote %d frames (%dx%d, %zu Gaussians, %s) to %s\n", spec.frames, spec.width, spec.height,
                scene.canonical.size(), to_string(spec.family).c_str(), manifest.string().c_str());
    return 0;
}

int cmd_init(const GlobalOptions& g, const fs::path& manifest, const fs::path& out) {
    const TrainConfig cfg = train_config(load_config(g));
    const Scene scene = load_scene(manifest, cfg.exec());
    const auto train = scene.train_frames();
    const auto clouds = reproject_frames(train, cfg.exec());
    std::size_t total = 0;
    for (const auto& c : clouds) total += c.size();
    const PointCloud holistic = combine_holistic(clouds, cfg.init.keep_fraction, cfg.seed);
    fs::create_directories(out);
    write_ply(out / "points.ply", holistic);
    const BoundingBox b = holistic.bounds();
    std::printf("frames used      %zu of %zu\n", clouds.size(), train.size());
    std::printf("points total     %zu\n", total);
    std::printf("points kept      %zu (keep fraction %g)\n", holistic.size(), cfg.init.keep_fraction);
    std::printf("bounds           [%.4f %.4f %.4f] - [%.4f %.4f %.4f]\n", b.lo.x(), b.lo.y(), b.lo.z(), b.hi.x(),
                b.hi.y(), b.hi.z());
    std::printf("wrote            %s\n", (out / "points.ply").string().c_str());
    return 0;
}

int cmd_train(const GlobalOptions& g, const fs::path& manifest, const fs::path& out, std::optional<int> iters) {
    TrainConfig cfg = train_config(load_config(g));
    if (iters) cfg.total_iters = *iters;
    fs::create_directories(out);
    if (cfg.nan_dump_path.empty()) cfg.nan_dump_path = (out / "nan_dump.splf").string();
    cfg.validate();
    const Scene scene = load_scene(manifest, cfg.exec());
    Trainer trainer(cfg, scene.train_frames(), scene.manifest.depth_mode);
    const auto& st = trainer.state();
    spdlog::info("{} Gaussians, {} deformation parameters, {} train / {} test frames", st.cloud.size(),
                 st.field.parameter_count(), scene.train.size(), scene.test.size());

    std::ofstream log(out / "train_log.csv");
    if (!log) throw IoError("cannot write the training log");
    log << LossReport::csv_header() << '\n';
    const auto test = scene.test_frames();
    const auto t0 = std::chrono::steady_clock::now();
    trainer.run(static_cast<std::uint64_t>(cfg.total_iters), [&](const LossReport& r) {
        const auto it = trainer.state().iteration;
        log << r.csv_row(static_cast<long>(it - 1)) << '\n';
        if (it % 200 == 0) spdlog::info("iter {:5d}  loss {:.5f}  gaussians {}", it, r.total, trainer.state().cloud.size());
        if (cfg.eval_interval > 0 && it % static_cast<std::uint64_t>(cfg.eval_interval) == 0 && !test.empty())
            spdlog::info("iter {:5d}  test PSNR {:.3f}", it, evaluate(trainer.state(), test).mean_psnr);
        if (cfg.checkpoint_interval > 0 && it % static_cast<std::uint64_t>(cfg.checkpoint_interval) == 0) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%06llu.splf", static_cast<unsigned long long>(it));
            save_checkpoint(trainer.state(), out / name);
        }
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(trainer.state(), out / "checkpoint.splf");
    std::printf("trained %d iterations in %.1f s (%.1f ms/iter warmup, %.1f ms/iter joint)\n", cfg.total_iters, secs,
                1e3 * trainer.mean_warmup_seconds(), 1e3 * trainer.mean_joint_seconds());
    if (!test.empty()) {
        const EvalReport r = evaluate(trainer.state(), test);
        std::printf("%s", r.table().c_str());
        write_metrics_json(out / "metrics.json", r);
    }
    return 0;
}

int cmd_render(const GlobalOptions& g, const fs::path& checkpoint, const fs::path& manifest_path,
               std::optional<double> time, std::optional<int> frame, const fs::path& out_color,
               const fs::path& out_depth, double depth_scale) {
    TrainState st = load_checkpoint(checkpoint);
    const KeyValueConfig kv = load_config(g);
    if (kv.contains("threads")) st.config.threads = static_cast<int>(kv.get_int("threads", 1));
    if (kv.contains("deterministic")) st.config.deterministic = kv.get_bool("deterministic", true);
    const SceneManifest m = read_manifest(manifest_path);
    const auto times = normalized_times(m);
    std::size_t index = 0;
    float t = 0.0f;
    if (frame) {
        if (*frame < 0 || static_cast<std::size_t>(*frame) >= m.frames.size())
            throw ConfigError("frame index " + std::to_string(*frame) + " is out of range");
        index = static_cast<std::size_t>(*frame);
        t = times[index];
    }
    if (time) t = static_cast<float>(*time);
    const RenderOutput<float> out = render_state(st, m.camera(index), t);
    write_png_rgb(out_color, out.color);
    std::printf("wrote %s (t = %.4f)\n", out_color.string().c_str(), t);
    if (!out_depth.empty()) {
        write_png_depth(out_depth, out.depth, depth_scale > 0 ? depth_scale : m.depth_scale);
        std::printf("wrote %s\n", out_depth.string().c_str());
    }
    return 0;
}

int cmd_eval(const GlobalOptions& g, const fs::path& manifest, const fs::path& checkpoint, const fs::path& predictions,
             const std::string& split, const fs::path& out) {
    if (checkpoint.empty() == predictions.empty()) throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
    const KeyValueConfig kv = load_config(g);
    const ExecPolicy exec{static_cast<int>(kv.get_int("threads", 1)), kv.get_bool("deterministic", true)};
    const Scene scene = load_scene(manifest, exec);
    const auto frames = select(scene, split);
    EvalReport r;
    if (!checkpoint.empty()) {
        TrainState st = load_checkpoint(checkpoint);
        st.config.threads = exec.threads;
        st.config.deterministic = exec.deterministic;
        r = evaluate(st, frames);
    } else {
        std::vector<Image> preds;
        for (const auto& f : frames) {
            const fs::path name = fs::path(scene.manifest.frames[static_cast<std::size_t>(f.index)].image).filename();
            preds.push_back(read_png_rgb(predictions / name));
        }
        r = evaluate_images(preds, frames);
    }
    std::printf("%s", r.table().c_str());
    if (!out.empty()) write_metrics_json(out, r);
    return 0;
}

int cmd_bench(const GlobalOptions& g, int gaussians, int size, int renders) {
    const KeyValueConfig kv = load_config(g);
    const ExecPolicy exec{static_cast<int>(kv.get_int("threads", 1)), kv.get_bool("deterministic", true)};
    SyntheticSpec spec;
    spec.gaussians = gaussians;
    spec.width = spec.height = size;
    spec.frames = 2;
    const SyntheticScene scene = generate_synthetic(spec, exec);
    const GaussianCloud<float> cloud = scene.canonical.cast<float>();
    const Camera<float> cam = scene.camera.cast<float>();
    RasterConfig rc;
    rc.exec = exec;
    Rasterizer<float> raster(rc);
    raster.forward(cloud, cam);
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < renders; ++i) raster.forward(cloud, cam);
    const double fwd = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Raster<float> dc(size, size, 3, 1e-3f), dd(size, size, 1, 1e-3f);
    const auto t1 = std::chrono::steady_clock::now();
    for (int i = 0; i < renders; ++i) raster.backward(cloud, cam, dc, dd);
    const double bwd = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    std::printf("scene             %d Gaussians, %dx%d, %d thread(s)\n", gaussians, size, size, exec.threads);
    std::printf("forward           %.1f frames/s (%.3f ms/frame)\n", renders / fwd, 1e3 * fwd / renders);
    std::printf("backward          %.1f passes/s (%.3f ms/pass)\n", renders / bwd, 1e3 * bwd / renders);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynsplat: dynamic Gaussian splatting reconstruction"};
    app.require_subcommand(1);
    GlobalOptions g;
    std::uint64_t seed = 0;
    int threads = 1;
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed")->trigger_on_parse();
    auto* threads_opt = app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    bool det = true;
    auto* det_flag = app.add_flag("--deterministic,!--no-deterministic", det,
                                  "fixed work partition and reduction order (default on)");
    app.add_option("--config", g.config_path, "flat key = value config file")->check(CLI::ExistingFile);
    app.add_flag("-v,--verbose", g.verbose, "debug logging");
    (void)seed_opt;

    fs::path out, manifest, checkpoint, predictions, out_color, out_depth;
    std::optional<int> iters, frame;
    std::optional<double> time;
    std::string split = "test";
    double depth_scale = 0;
    int bench_gaussians = 2000, bench_size = 128, bench_renders = 50;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dynamic scene");
    synth->add_option("--out", out, "output directory")->required();

    auto* init = app.add_subcommand("init", "run the initializer, write a debug PLY and stats");
    init->add_option("--manifest", manifest, "scene manifest")->required()->check(CLI::ExistingFile);
    init->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train on a scene");
    train->add_option("--manifest", manifest, "scene manifest")->required()->check(CLI::ExistingFile);
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--iters", iters, "override train.total_iters");

    auto* render = app.add_subcommand("render", "render a checkpoint to PNG");
    render->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
    render->add_option("--manifest", manifest, "scene manifest (camera)")->required()->check(CLI::ExistingFile);
    auto* time_opt = render->add_option("--time", time, "normalized time in [0, 1]");
    auto* frame_opt = render->add_option("--frame", frame, "frame index (camera and time)");
    time_opt->excludes(frame_opt);
    render->add_option("--out", out_color, "color PNG")->required();
    render->add_option("--depth-out", out_depth, "16-bit depth PNG");
    render->add_option("--depth-scale", depth_scale, "scene units per depth code (default: manifest)");

    auto* eval = app.add_subcommand("eval", "PSNR / SSIM on a split");
    eval->add_option("--manifest", manifest, "scene manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("--checkpoint", checkpoint, "checkpoint to render")->check(CLI::ExistingFile);
    eval->add_option("--predictions", predictions, "directory of predicted PNGs named like the frames")
        ->check(CLI::ExistingDirectory);
    eval->add_option("--split", split, "test, train or all");
    eval->add_option("--out", out, "metrics JSON");

    auto* bench = app.add_subcommand("bench", "rasterizer throughput on a fixed synthetic scene");
    bench->add_option("--gaussians", bench_gaussians, "Gaussian count")->check(CLI::PositiveNumber);
    bench->add_option("--size", bench_size, "image side in pixels")->check(CLI::Range(8, 4096));
    bench->add_option("--renders", bench_renders, "timed passes")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }
    if (app.count("--seed")) g.seed = seed;
    if (*threads_opt) g.threads = threads;
    if (*det_flag) g.deterministic = det;
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*synth) return cmd_synth(g, out);
        if (*init) return cmd_init(g, manifest, out);
        if (*train) return cmd_train(g, manifest, out, iters);
        if (*render) return cmd_render(g, checkpoint, manifest, time, frame, out_color, out_depth, depth_scale);
        if (*eval) return cmd_eval(g, manifest, checkpoint, predictions, split, out);
        if (*bench) return cmd_bench(g, bench_gaussians, bench_size, bench_renders);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
