// Acceptance suite: one PASS/FAIL line per criterion. Criteria can be
// selected by number on the command line (default: all).
#include "fixtures.hpp"

#include "dynsplat/init/initializer.hpp"
#include "dynsplat/io/kv_config.hpp"
#include "dynsplat/io/scene.hpp"
#include "dynsplat/io/synthetic.hpp"
#include "dynsplat/train/trainer.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

using namespace dynsplat;
using namespace dynsplat::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string strf(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        notes.push_back((ok ? "" : "!") + what);
    }
};

// ---------------------------------------------------------------------------
// Shared synthetic scene and training runs (criteria 5 and 6).

TrainConfig desk_config() {
    const KeyValueConfig kv = KeyValueConfig::load(fs::path(DYNSPLAT_SOURCE_DIR) / "configs" / "synthetic.cfg");
    TrainConfig c;
    c.apply(kv);
    SyntheticSpec ignored;
    ignored.apply(kv);
    kv.require_all_used();
    c.validate();
    return c;
}

struct DeskScene {
    TempDir dir{"acceptance"};
    Scene scene;

    DeskScene() {
        const SyntheticSpec spec; // 500 Gaussians, 96x96, 24 frames, sinusoidal
        scene = load_scene(write_synthetic(generate_synthetic(spec), dir.path()));
    }
};

DeskScene& desk_scene() {
    static DeskScene d;
    return d;
}

struct RunResult {
    double psnr = 0;
    double warmup_psnr = 0;
    double seconds = 0;
    double joint_step_seconds = 0;
    std::optional<TrainState> warmup_state;
};

RunResult train_desk(const TrainConfig& cfg, bool keep_warmup_state, const std::string& label) {
    const Scene& scene = desk_scene().scene;
    const auto test = scene.test_frames();
    const auto t0 = Clock::now();
    Trainer t(cfg, scene.train_frames(), scene.manifest.depth_mode);
    RunResult r;
    t.run(static_cast<std::uint64_t>(cfg.warmup_iters));
    r.warmup_psnr = evaluate(t.state(), test).mean_psnr;
    if (keep_warmup_state) r.warmup_state = t.state();
    t.run(static_cast<std::uint64_t>(cfg.total_iters));
    r.seconds = seconds_since(t0);
    r.psnr = evaluate(t.state(), test).mean_psnr;
    r.joint_step_seconds = t.mean_joint_seconds();
    spdlog::info("{}: {} Gaussians, test PSNR {:.3f} dB (warmup end {:.3f}), {:.1f} s, {:.1f} ms/joint iter", label,
                 t.state().cloud.size(), r.psnr, r.warmup_psnr, r.seconds, 1e3 * r.joint_step_seconds);
    return r;
}

const RunResult& full_run() {
    static const RunResult r = train_desk(desk_config(), true, "holistic + HexPlane");
    return r;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = Clock::now();
    GradCheck raster, hex, mlp, loss;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        raster.merge(check_rasterizer_gradients(seed, 32, 32, 20));
        hex.merge(check_deformation_gradients(seed, EncoderKind::HexPlane));
        mlp.merge(check_deformation_gradients(seed, EncoderKind::PositionalMlp));
        loss.merge(check_loss_gradients(seed));
    }
    Outcome o;
    for (const auto& [name, c] : {std::pair<const char*, const GradCheck&>{"rasterizer", raster},
                                  {"hexplane field", hex},
                                  {"mlp field", mlp},
                                  {"losses", loss}})
        o.require(c.max_rel < 1e-4 && c.checked > 0,
                  strf("%s max rel %.2e over %zu entries%s", name, c.max_rel, c.checked,
                      c.max_rel < 1e-4 ? "" : (" worst " + c.worst).c_str()));
    const double s = seconds_since(t0);
    o.require(s < 300, strf("%.1f s (< 300)", s));
    return o;
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    double worst = 0;
    Rng rng(2024);
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const int w = 8 + static_cast<int>(rng() % 57), h = 8 + static_cast<int>(rng() % 57);
        const Camera<double> cam = make_camera<double>(w, h, seed);
        const GaussianCloud<double> cloud = random_cloud<double>(seed, 1 + rng() % 60, cam);
        RasterConfig rc;
        rc.stop_transmittance = 0;
        rc.tile_size = std::array{4, 8, 16}[seed % 3];
        const auto p = project(cloud, cam, rc);
        const auto a = render(p, cam, rc), b = render_oracle(p, cam, rc);
        for (std::size_t i = 0; i < a.color.data.size(); ++i) worst = std::max(worst, std::abs(a.color.data[i] - b.color.data[i]));
        for (std::size_t i = 0; i < a.depth.data.size(); ++i) worst = std::max(worst, std::abs(a.depth.data[i] - b.depth.data[i]));
    }
    Outcome o;
    o.require(worst <= 1e-6, strf("max |tile - oracle| %.2e over 100 scenes (<= 1e-6)", worst));
    const double s = seconds_since(t0);
    o.require(s < 60, strf("%.1f s (< 60)", s));
    return o;
}

Outcome blending_invariants() {
    std::size_t pixels = 0, violations = 0;
    double mismatch = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const Camera<double> cam = make_camera<double>(20, 16, seed);
        const GaussianCloud<double> cloud = random_cloud<double>(seed, 30, cam);
        const RasterConfig rc;
        const auto p = project(cloud, cam, rc);
        const auto out = render(p, cam, rc);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                const PixelTrace t = trace_pixel(p, x, y, rc);
                double sum = 0;
                for (double w : t.weights) {
                    violations += w < 0.0;
                    sum += w;
                }
                violations += sum > 1.0;
                for (std::size_t k = 1; k < t.transmittance.size(); ++k)
                    violations += t.transmittance[k] > t.transmittance[k - 1];
                mismatch = std::max(mismatch, std::abs(out.alpha.at(x, y) - sum));
                ++pixels;
            }
    }
    Outcome o;
    o.require(violations == 0, strf("%zu invariant violations over %zu pixels", violations, pixels));
    o.require(mismatch <= 1e-9, strf("renderer alpha vs traced weight sum %.1e", mismatch));

    const Camera<double> cam = make_camera<double>(5, 5);
    const std::vector<ProjectedGaussian<double>> gs{splat_at(2, 2, 2.0, 0.5, Vec3<double>::Zero(), 0),
                                                     splat_at(2, 2, 1.0, 0.5, Vec3<double>::Ones(), 1)};
    const auto out = render<double>(gs, cam, RasterConfig{});
    const bool exact = out.color.at(2, 2, 0) == 0.5 && out.color.at(2, 2, 1) == 0.5 && out.color.at(2, 2, 2) == 0.5 &&
                       out.depth.at(2, 2) == 1.0;
    o.require(exact, strf("two-Gaussian case C = %.17g, D = %.17g (exactly 0.5, 1.0)", out.color.at(2, 2, 0),
                         out.depth.at(2, 2)));
    return o;
}

Outcome identity_at_init() {
    Outcome o;
    const Scene& scene = desk_scene().scene;
    for (EncoderKind kind : {EncoderKind::HexPlane, EncoderKind::PositionalMlp}) {
        TrainConfig cfg = desk_config();
        cfg.deformation.encoder = kind;
        const TrainState st = initialize_state(cfg, scene.train_frames(), scene.manifest.depth_mode);
        Rasterizer<float> r(cfg.raster);
        std::size_t identical = 0, total = 0;
        for (const auto& f : scene.frames) {
            const auto canonical = r.forward(st.cloud, f.camera);
            for (float t : {0.0f, 0.5f, 1.0f}) {
                const auto out = render_state(st, f.camera, t);
                identical += out.color.data == canonical.color.data && out.depth.data == canonical.depth.data;
                ++total;
            }
        }
        o.require(identical == total, strf("%s: %zu of %zu renders bit-identical", to_string(kind).c_str(), identical, total));
    }
    return o;
}

Outcome synthetic_end_to_end() {
    const RunResult& full = full_run();
    // Static baseline: continue from the warmup state with the deformation
    // frozen at its zero-initialized identity.
    TrainState frozen = *full.warmup_state;
    frozen.config.lr.hexplane = 0;
    frozen.config.lr.decoders = 0;
    const Scene& scene = desk_scene().scene;
    Trainer t(std::move(frozen), scene.train_frames());
    t.run(static_cast<std::uint64_t>(t.state().config.total_iters));
    const double static_psnr = evaluate(t.state(), scene.test_frames()).mean_psnr;
    spdlog::info("static baseline: test PSNR {:.3f} dB", static_psnr);
    const double baseline = std::max(static_psnr, full.warmup_psnr);

    Outcome o;
    o.require(full.psnr >= 30.0, strf("held-out PSNR %.2f dB (>= 30)", full.psnr));
    o.require(full.psnr >= baseline + 5.0,
              strf("gain %.2f dB over static %.2f / warmup-end %.2f (>= 5)", full.psnr - baseline, static_psnr,
                  full.warmup_psnr));
    o.require(full.seconds <= 900, strf("training %.0f s (<= 900)", full.seconds));
    return o;
}

Outcome ablation_directions() {
    const RunResult& full = full_run();
    TrainConfig rnd = desk_config();
    rnd.init.mode = InitMode::Random;
    const RunResult random = train_desk(rnd, false, "random init + HexPlane");
    TrainConfig mlp_cfg = desk_config();
    mlp_cfg.deformation.encoder = EncoderKind::PositionalMlp;
    mlp_cfg.match_mlp_budget = true;
    const RunResult mlp = train_desk(mlp_cfg, false, "holistic + MLP");

    Outcome o;
    o.require(random.psnr < full.psnr, strf("random init %.2f dB < holistic %.2f dB", random.psnr, full.psnr));
    o.require(mlp.psnr <= full.psnr, strf("MLP %.2f dB <= HexPlane %.2f dB", mlp.psnr, full.psnr));
    const double ratio = mlp.joint_step_seconds / full.joint_step_seconds;
    o.require(ratio > 1.0, strf("MLP / HexPlane time per joint iteration %.3f (> 1)", ratio));
    return o;
}

Outcome loss_properties() {
    Rng rng(77);
    double affine = 0, flip = 0, self = 0;
    bool binocular = true, tv = true;
    for (int k = 0; k < 50; ++k) {
        const int w = 4 + static_cast<int>(rng() % 20), h = 4 + static_cast<int>(rng() % 20);
        const auto mask = random_mask(rng, w, h, 0.8);
        const auto target = random_raster<double>(rng, w, h, 1, 0.5, 8);
        const auto pred = random_raster<double>(rng, w, h, 1, 0.5, 8);
        const double base = loss_depth_monocular(pred, target, mask).value;
        const double a = std::exp(uniform(rng, -4, 4)), b = uniform(rng, -20, 20);
        auto moved = pred, neg = target;
        for (auto& v : moved.data) v = a * v + b;
        for (auto& v : neg.data) v = -v;
        affine = std::max(affine, std::abs(loss_depth_monocular(moved, target, mask).value - base));
        flip = std::max(flip, std::abs(loss_depth_monocular(neg, target, mask).value - 2.0));
        self = std::max(self, std::abs(loss_depth_monocular(target, target, mask).value));

        binocular = binocular && loss_depth_binocular(target, target, mask).value == 0.0;
        auto off = target;
        for (std::size_t p = 0; p < mask.data.size(); ++p)
            if (!mask.data[p]) off.data[p] += 1.0;
        binocular = binocular && loss_depth_binocular(off, target, mask).value == 0.0;
        for (std::size_t p = 0; p < mask.data.size(); ++p)
            if (mask.data[p]) {
                off.data[p] *= 1.5;
                break;
            }
        binocular = binocular && loss_depth_binocular(off, target, mask).value > 0.0;

        const double cval = uniform(rng, 0, 1);
        tv = tv && total_variation(Raster<double>(w, h, 3, cval)) == 0.0 &&
             loss_spatial_tv(Raster<double>(w, h, 3, cval), Raster<double>(w, h, 1, 2 * cval)) == 0.0;
    }
    HexPlaneConfig hc;
    hc.base_spatial = 4;
    hc.base_temporal = 4;
    hc.channels = 3;
    BoundingBox box;
    box.hi = Eigen::Vector3d::Ones();
    HexPlaneField<double> field(hc, box, 5);
    for (int l = 0; l < hc.levels; ++l)
        for (int p = 0; p < 6; ++p)
            for (auto& v : field.plane(l, p).values) v = 0.3;
    tv = tv && loss_temporal_tv(field) == 0.0;

    Outcome o;
    o.require(affine <= 1e-6, strf("monocular affine deviation %.1e (<= 1e-6)", affine));
    o.require(flip <= 1e-6, strf("monocular(-D) - 2 = %.1e (<= 1e-6)", flip));
    o.require(self <= 1e-6, strf("monocular(D) = %.1e", self));
    o.require(binocular, "binocular zero iff kept depths agree");
    o.require(tv, "spatial and temporal TV zero on constants");
    return o;
}

Outcome init_round_trip() {
    const auto& frames = desk_scene().scene.frames;
    std::vector<FrameRecord> posed;
    for (std::size_t k = 0; k < 6; ++k) {
        FrameRecord f = frames[k];
        f.camera = make_camera<float>(f.width(), f.height(), 31 + k);
        posed.push_back(f);
    }
    double px_err = 0, depth_err = 0;
    std::size_t points = 0;
    for (const std::vector<FrameRecord>* set : {&frames, static_cast<const std::vector<FrameRecord>*>(&posed)}) {
        const auto clouds = reproject_frames(*set);
        for (std::size_t k = 0; k < clouds.size(); ++k) {
            const FrameRecord& f = (*set)[static_cast<std::size_t>(clouds[k].sources.front()[0])];
            const Camera<double> cam = f.camera.cast<double>();
            for (std::size_t i = 0; i < clouds[k].size(); ++i) {
                const auto& src = clouds[k].sources[i];
                const Eigen::Vector3d pc = cam.to_camera(clouds[k].positions[i]);
                const Vec2<double> uv = cam.project_camera_point(pc);
                px_err = std::max({px_err, std::abs(uv.x() - src[1]), std::abs(uv.y() - static_cast<double>(src[2]))});
                const double d = f.depth.at(src[1], src[2]);
                depth_err = std::max(depth_err, std::abs(pc.z() - d) / d);
                ++points;
            }
        }
    }
    std::vector<PointCloud> million;
    for (int k = 0; k < 8; ++k) {
        PointCloud c;
        for (int i = 0; i < 125'000; ++i) {
            c.positions.emplace_back(k, i, 1.0);
            c.colors.emplace_back(0.5f, 0.5f, 0.5f);
        }
        million.push_back(std::move(c));
    }
    const std::size_t kept = combine_holistic(million, 0.001, 3).size();

    Outcome o;
    o.require(px_err <= 0.5, strf("max reprojection error %.2e px over %zu points (<= 0.5)", px_err, points));
    o.require(depth_err <= 1e-5, strf("max relative depth error %.2e (<= 1e-5)", depth_err));
    o.require(kept == 1000, strf("0.1%% of 1,000,000 points keeps %zu (== 1000)", kept));
    return o;
}

Outcome determinism() {
    TrainConfig cfg = desk_config();
    cfg.threads = 4;
    cfg.deterministic = true;
    cfg.warmup_iters = 60;
    cfg.total_iters = 160;
    TempDir dir("determinism");
    auto run = [&](const std::string& name) {
        const Scene& scene = desk_scene().scene;
        Trainer t(cfg, scene.train_frames(), scene.manifest.depth_mode);
        std::ostringstream log;
        t.run(static_cast<std::uint64_t>(cfg.total_iters),
              [&](const LossReport& r) { log << r.csv_row(static_cast<long>(t.state().iteration)) << '\n'; });
        const fs::path ck = dir / (name + ".splf");
        save_checkpoint(t.state(), ck);
        std::ifstream in(ck, std::ios::binary);
        return std::make_pair(log.str(), std::string(std::istreambuf_iterator<char>(in), {}));
    };
    const auto a = run("a"), b = run("b");
    Outcome o;
    o.require(a.first == b.first, strf("training logs identical (%zu bytes)", a.first.size()));
    o.require(a.second == b.second, strf("checkpoints identical (%zu bytes)", a.second.size()));
    return o;
}

Outcome hexplane_scaling() {
    Outcome o;
    std::size_t configs = 0, count_ok = 0, scale_ok = 0;
    BoundingBox box;
    box.hi = Eigen::Vector3d::Ones();
    for (int levels : {1, 2, 3})
        for (int base : {4, 6, 8, 16})
            for (int bt : {2, 5, 16})
                for (int ch : {1, 8}) {
                    HexPlaneConfig c;
                    c.levels = levels;
                    c.base_spatial = base;
                    c.base_temporal = bt;
                    c.channels = ch;
                    std::size_t closed = 0;
                    for (int l = 0; l < levels; ++l) {
                        const std::size_t rs = static_cast<std::size_t>(base) << l, rt = static_cast<std::size_t>(bt);
                        closed += 3 * rs * rs * static_cast<std::size_t>(ch) + 3 * rs * rt * static_cast<std::size_t>(ch) +
                                  3 * static_cast<std::size_t>(ch);
                    }
                    const HexPlaneField<float> f(c, box, 1);
                    HexPlaneConfig d = c;
                    d.base_spatial *= 2;
                    const HexPlaneField<float> g(d, box, 1);
                    ++configs;
                    count_ok += f.parameter_count() == closed;
                    scale_ok += g.spatial_plane_parameter_count() == 4 * f.spatial_plane_parameter_count();
                }
    o.require(count_ok == configs, strf("closed-form count on %zu of %zu configs", count_ok, configs));
    o.require(scale_ok == configs, strf("spatial planes x4 on doubling in %zu of %zu configs", scale_ok, configs));
    return o;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_pattern("  [%H:%M:%S] %v");
    const std::map<int, std::pair<const char*, Outcome (*)()>> criteria{
        {1, {"gradient correctness", gradient_correctness}},
        {2, {"tile renderer equals oracle", oracle_equivalence}},
        {3, {"blending invariants", blending_invariants}},
        {4, {"identity at initialization", identity_at_init}},
        {5, {"synthetic end-to-end", synthetic_end_to_end}},
        {6, {"ablation directions", ablation_directions}},
        {7, {"loss properties", loss_properties}},
        {8, {"initialization round trip", init_round_trip}},
        {9, {"determinism", determinism}},
        {10, {"hexplane scaling", hexplane_scaling}},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int id = std::atoi(argv[i]);
        if (!criteria.count(id)) {
            std::fprintf(stderr, "usage: %s [criterion 1-10 ...]\n", argv[0]);
            return 2;
        }
        selected.insert(id);
    }
    int failed = 0;
    for (const auto& [id, entry] : criteria) {
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = entry.second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes.push_back(std::string("!exception: ") + e.what());
        }
        std::string detail;
        for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
        std::printf("%s %2d %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, entry.first, detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
