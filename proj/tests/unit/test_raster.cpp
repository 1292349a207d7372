#include "doctest.h"
#include "fixtures.hpp"

using namespace dynsplat;
using namespace dynsplat::testing;

TEST_CASE("on-axis Gaussian projects to the principal point") {
    Camera<double> cam = make_camera<double>(31, 21);
    GaussianCloud<double> cloud(1, 0);
    cloud.position(0) = Vec3<double>(0, 0, 3);
    cloud.rotation(0) = Vec4<double>(1, 0, 0, 0);
    cloud.log_scale(0) = Vec3<double>::Constant(std::log(0.1));
    const auto p = project(cloud, cam, RasterConfig{});
    REQUIRE(p.size() == 1);
    CHECK(p[0].mean2d.x() == doctest::Approx(cam.cx));
    CHECK(p[0].mean2d.y() == doctest::Approx(cam.cy));
    CHECK(p[0].depth == doctest::Approx(3.0));
}

TEST_CASE("isotropic on-axis covariance projects to (f sigma / z)^2 plus dilation") {
    Camera<double> cam = make_camera<double>(40, 40);
    const double sigma = 0.05, z = 2.5;
    GaussianCloud<double> cloud(1, 0);
    cloud.position(0) = Vec3<double>(0, 0, z);
    cloud.rotation(0) = Vec4<double>(0.3, 0.5, -0.2, 0.7);
    cloud.log_scale(0) = Vec3<double>::Constant(std::log(sigma));
    RasterConfig rc;
    const auto p = project(cloud, cam, rc);
    REQUIRE(p.size() == 1);
    const double expected = std::pow(cam.fx * sigma / z, 2) + rc.dilation;
    CHECK(p[0].cov2d(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(p[0].cov2d(1, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(p[0].cov2d(0, 1)) < 1e-12);
}

TEST_CASE("Gaussians behind the camera or beyond the far plane are culled") {
    Camera<double> cam = make_camera<double>(16, 16);
    GaussianCloud<double> cloud = random_cloud<double>(2, 3, cam, 0);
    cloud.position(0) = Vec3<double>(0, 0, -1);
    cloud.position(1) = Vec3<double>(0, 0, 1000);
    const auto p = project(cloud, cam, RasterConfig{});
    REQUIRE(p.size() == 1);
    CHECK(p[0].gaussian_id == 2);
}

TEST_CASE("single opaque contributor reproduces its color up to the alpha clamp") {
    Camera<double> cam = make_camera<double>(9, 9);
    RasterConfig rc;
    const Vec3<double> c1(0.9, 0.2, 0.4);
    const auto out = render<double>({splat_at(4, 4, 2.0, 1.0, c1, 0)}, cam, rc);
    // Alpha saturates at max_alpha; the remainder is background.
    for (int ch = 0; ch < 3; ++ch) CHECK(out.color.at(4, 4, ch) == doctest::Approx(rc.max_alpha * c1[ch]));
    CHECK(out.depth.at(4, 4) == doctest::Approx(rc.max_alpha * 2.0));
    CHECK(out.normalized_depth.at(4, 4) == doctest::Approx(2.0));
}

TEST_CASE("two half-transparent contributors blend as hand-computed") {
    Camera<double> cam = make_camera<double>(5, 5);
    RasterConfig rc;
    const std::vector<ProjectedGaussian<double>> gs{splat_at(2, 2, 2.0, 0.5, Vec3<double>::Zero(), 0),
                                                     splat_at(2, 2, 1.0, 0.5, Vec3<double>::Ones(), 1)};
    for (const auto& out : {render<double>(gs, cam, rc), render_oracle<double>(gs, cam, rc)}) {
        for (int ch = 0; ch < 3; ++ch) CHECK(out.color.at(2, 2, ch) == 0.5);
        CHECK(out.depth.at(2, 2) == 1.0);
        CHECK(out.alpha.at(2, 2) == 0.75);
        CHECK(out.contributors.at(2, 2) == 2);
    }
}

TEST_CASE("empty scene renders the background with zero alpha") {
    Camera<double> cam = make_camera<double>(7, 5);
    RasterConfig rc;
    rc.background = {0.2, 0.4, 0.6};
    for (const auto& out : {render<double>({}, cam, rc), render_oracle<double>({}, cam, rc)}) {
        for (int y = 0; y < 5; ++y)
            for (int x = 0; x < 7; ++x) {
                CHECK(out.color.at(x, y, 1) == 0.4);
                CHECK(out.alpha.at(x, y) == 0.0);
                CHECK(out.depth.at(x, y) == 0.0);
            }
    }
}

TEST_CASE("tile renderer equals the oracle without early stop") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const Camera<double> cam = make_camera<double>(37, 29, seed);
        const GaussianCloud<double> cloud = random_cloud<double>(seed, 1 + seed % 30, cam);
        RasterConfig rc;
        rc.stop_transmittance = 0;
        rc.tile_size = seed % 2 ? 8 : 16;
        const auto p = project(cloud, cam, rc);
        const auto a = render(p, cam, rc);
        const auto b = render_oracle(p, cam, rc);
        double err = 0;
        for (std::size_t i = 0; i < a.color.data.size(); ++i) err = std::max(err, std::abs(a.color.data[i] - b.color.data[i]));
        for (std::size_t i = 0; i < a.depth.data.size(); ++i) err = std::max(err, std::abs(a.depth.data[i] - b.depth.data[i]));
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("a single Gaussian renders the same through tiles and oracle") {
    const Camera<double> cam = make_camera<double>(20, 20);
    const GaussianCloud<double> cloud = random_cloud<double>(4, 1, cam);
    const RasterConfig rc;
    const auto p = project(cloud, cam, rc);
    const auto a = render(p, cam, rc);
    const auto b = render_oracle(p, cam, rc);
    CHECK(a.color.data == b.color.data);
    CHECK(a.depth.data == b.depth.data);
}

TEST_CASE("blending weights are non-negative, sum to at most one, and transmittance never increases") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Camera<double> cam = make_camera<double>(16, 12, seed);
        const GaussianCloud<double> cloud = random_cloud<double>(seed, 25, cam);
        RasterConfig rc;
        const auto p = project(cloud, cam, rc);
        const auto out = render(p, cam, rc);
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const PixelTrace t = trace_pixel(p, x, y, rc);
                double sum = 0;
                for (double w : t.weights) {
                    CHECK(w >= 0.0);
                    sum += w;
                }
                CHECK(sum <= 1.0);
                for (std::size_t k = 1; k < t.transmittance.size(); ++k)
                    CHECK(t.transmittance[k] <= t.transmittance[k - 1]);
                CHECK(out.alpha.at(x, y) == doctest::Approx(sum).epsilon(1e-9));
                for (int ch = 0; ch < 3; ++ch) CHECK(out.color.at(x, y, ch) == doctest::Approx(t.color[ch]).epsilon(1e-9));
                CHECK(out.depth.at(x, y) == doctest::Approx(t.depth).epsilon(1e-9));
            }
        }
    }
}

TEST_CASE("zero upstream gradient gives exactly zero parameter gradients") {
    const Camera<double> cam = make_camera<double>(16, 16, 3);
    const GaussianCloud<double> cloud = random_cloud<double>(3, 10, cam);
    Rasterizer<double> r;
    r.forward(cloud, cam);
    const auto g = r.backward(cloud, cam, Raster<double>(16, 16, 3), Raster<double>(16, 16, 1));
    for (auto* v : {&g.positions, &g.rotations, &g.log_scales, &g.opacity_logits, &g.sh_coeffs})
        for (double x : *v) CHECK(x == 0.0);
}

TEST_CASE("opacity gradient of a single on-axis Gaussian matches finite differences") {
    Camera<double> cam = make_camera<double>(9, 9);
    GaussianCloud<double> cloud(1, 3);
    cloud.position(0) = Vec3<double>(0, 0, 3);
    cloud.rotation(0) = Vec4<double>(1, 0, 0, 0);
    cloud.log_scale(0) = Vec3<double>::Constant(std::log(0.2));
    cloud.opacity_logits[0] = 0.3;
    cloud.sh(0)[0] = 1.0;
    RasterConfig rc;
    Rasterizer<double> r(rc);
    r.forward(cloud, cam);
    Raster<double> dc(9, 9, 3);
    dc.at(4, 4, 0) = 1.0;
    const auto g = r.backward(cloud, cam, dc, {});
    const auto f = [&] { return Rasterizer<double>(rc).forward(cloud, cam).color.at(4, 4, 0); };
    GradCheck check;
    check_block(check, "opacity", cloud.opacity_logits, g.opacity_logits, f);
    CHECK(check.checked == 1);
    CHECK_MESSAGE(check.max_rel < 1e-4, check.worst);
}

TEST_CASE("a Gaussian moved outside the frustum receives exactly zero gradient") {
    const Camera<double> cam = make_camera<double>(16, 16);
    GaussianCloud<double> cloud = random_cloud<double>(8, 4, cam);
    cloud.position(2) = Vec3<double>(50, 0, 3);
    Rasterizer<double> r;
    r.forward(cloud, cam);
    Rng rng(1);
    const auto g = r.backward(cloud, cam, random_raster<double>(rng, 16, 16, 3, -1, 1),
                              random_raster<double>(rng, 16, 16, 1, -1, 1));
    for (int k = 0; k < 3; ++k) CHECK(g.positions[6 + static_cast<std::size_t>(k)] == 0.0);
    CHECK(g.opacity_logits[2] == 0.0);
    for (double v : g.sh(2)) CHECK(v == 0.0);
    CHECK(r.screen_grad_norms()[2] == 0.0);
    CHECK(g.opacity_logits[0] != 0.0);
}

TEST_CASE("rasterizer gradients match central differences") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const GradCheck c = check_rasterizer_gradients(seed);
        CHECK(c.checked > 100);
        CHECK_MESSAGE(c.max_rel < 1e-4, c.worst);
    }
}

TEST_CASE("backward rejects a cloud that does not match the forward pass") {
    const Camera<double> cam = make_camera<double>(16, 16);
    const GaussianCloud<double> cloud = random_cloud<double>(8, 4, cam);
    Rasterizer<double> r;
    CHECK_THROWS_AS(r.backward(cloud, cam, {}, {}), StateMismatchError);
    r.forward(cloud, cam);
    const GaussianCloud<double> other = random_cloud<double>(8, 5, cam);
    CHECK_THROWS_AS(r.backward(other, cam, {}, {}), StateMismatchError);
    const Camera<double> bigger = make_camera<double>(20, 16);
    CHECK_THROWS_AS(r.backward(cloud, bigger, {}, {}), StateMismatchError);
}

TEST_CASE("forward and backward are bit-identical across runs with a fixed thread count") {
    const Camera<float> cam = make_camera<float>(48, 40, 5);
    const GaussianCloud<float> cloud = random_cloud<float>(5, 200, cam);
    Rng rng(2);
    const auto dc = random_raster<float>(rng, 48, 40, 3, -1, 1);
    const auto dd = random_raster<float>(rng, 48, 40, 1, -1, 1);
    RasterConfig rc;
    rc.exec = {4, true};
    Rasterizer<float> a(rc), b(rc);
    const auto oa = a.forward(cloud, cam);
    const auto ob = b.forward(cloud, cam);
    CHECK(oa.color.data == ob.color.data);
    const auto ga = a.backward(cloud, cam, dc, dd);
    const auto gb = b.backward(cloud, cam, dc, dd);
    CHECK(ga.positions == gb.positions);
    CHECK(ga.sh_coeffs == gb.sh_coeffs);
    // The image itself does not depend on the thread count.
    Rasterizer<float> single;
    CHECK(single.forward(cloud, cam).color.data == oa.color.data);
}

TEST_CASE("raster config validation") {
    RasterConfig rc;
    rc.tile_size = 0;
    CHECK_THROWS_AS(rc.validate(), ConfigError);
    rc = RasterConfig{};
    rc.max_alpha = 1.0;
    CHECK_THROWS_AS(rc.validate(), ConfigError);
}
