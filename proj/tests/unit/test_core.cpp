#include "doctest.h"
#include "fixtures.hpp"

#include "dynsplat/core/geometry.hpp"
#include "dynsplat/core/parallel.hpp"
#include "dynsplat/core/sh.hpp"

#include <Eigen/Eigenvalues>

#include <numbers>

using namespace dynsplat;
using namespace dynsplat::testing;

TEST_CASE("covariance of identity rotation and unit scale is the identity") {
    const Mat3<double> s = build_covariance<double>(Vec4<double>(1, 0, 0, 0), Vec3<double>::Zero());
    CHECK((s - Mat3<double>::Identity()).norm() == doctest::Approx(0.0));
}

TEST_CASE("covariance squares the scale") {
    const Mat3<double> s = build_covariance<double>(Vec4<double>(1, 0, 0, 0), Vec3<double>(std::log(2.0), 0, 0));
    CHECK(s(0, 0) == doctest::Approx(4.0));
    CHECK(s(1, 1) == doctest::Approx(1.0));
    CHECK(s(2, 2) == doctest::Approx(1.0));
}

TEST_CASE("quarter turn about z swaps the scaled axis") {
    // Independent: R = [[0,-1,0],[1,0,0],[0,0,1]], S = diag(2,1,1), R S S^T R^T.
    Mat3<double> r;
    r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    const Mat3<double> expected = r * Eigen::Vector3d(4, 1, 1).asDiagonal() * r.transpose();
    const double h = std::sqrt(0.5);
    const Mat3<double> s = build_covariance<double>(Vec4<double>(h, 0, 0, h), Vec3<double>(std::log(2.0), 0, 0));
    CHECK((s - expected).norm() < 1e-12);
    CHECK(s(1, 1) == doctest::Approx(4.0));
}

TEST_CASE("covariance ignores quaternion magnitude") {
    const Vec4<double> q(0.3, -0.2, 0.5, 0.1);
    const Vec3<double> ls(0.1, -0.4, 0.2);
    CHECK((build_covariance<double>(q, ls) - build_covariance<double>(7.0 * q, ls)).norm() < 1e-12);
}

TEST_CASE("covariance is symmetric positive definite for random inputs") {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const Vec4<double> q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        const Vec3<double> ls(uniform(rng, -3, 1), uniform(rng, -3, 1), uniform(rng, -3, 1));
        const Mat3<double> s = build_covariance<double>(q, ls);
        CHECK((s - s.transpose()).norm() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat3<double>> es(s);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("covariance backward matches finite differences") {
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
        Vec4<double> q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
        Vec3<double> ls(uniform(rng, -1, 0.5), uniform(rng, -1, 0.5), uniform(rng, -1, 0.5));
        Mat3<double> g;
        for (int i = 0; i < 9; ++i) g.data()[i] = uniform(rng, -1, 1);
        g = 0.5 * (g + g.transpose()).eval();
        const auto grad = build_covariance_backward(q, ls, g);
        const auto f = [&] { return (build_covariance<double>(q, ls).array() * g.array()).sum(); };
        GradCheck check;
        check_block(check, "q", std::span<double>(q.data(), 4), std::span<const double>(grad.d_quaternion.data(), 4), f);
        check_block(check, "ls", std::span<double>(ls.data(), 3), std::span<const double>(grad.d_log_scale.data(), 3), f);
        CHECK_MESSAGE(check.max_rel < 1e-5, check.worst);
    }
}

TEST_CASE("band-0 SH gives C0 * c + 0.5") {
    const double c = 0.7;
    const std::vector<double> coeffs{c, c, c};
    const auto out = eval_sh<double>(coeffs, Vec3<double>(0, 0, 1), 0);
    for (int ch = 0; ch < 3; ++ch) CHECK(out.rgb[ch] == doctest::Approx(0.2820948 * c + 0.5).epsilon(1e-7));
}

TEST_CASE("band-0 SH can reach pure red") {
    const double k = 0.5 / 0.28209479177387814;
    const std::vector<double> coeffs{k, -k, -k};
    const auto out = eval_sh<double>(coeffs, Vec3<double>(0.3, 0.1, 0.9).normalized(), 0);
    CHECK(out.rgb[0] == doctest::Approx(1.0));
    CHECK(out.rgb[1] == doctest::Approx(0.0));
    CHECK(out.rgb[2] == doctest::Approx(0.0));
    CHECK(k == doctest::Approx(1.7725).epsilon(1e-4));
}

TEST_CASE("zero SH coefficients give mid-gray at every degree") {
    for (int degree = 0; degree <= 3; ++degree) {
        const std::vector<double> coeffs(static_cast<std::size_t>(3 * sh_coeff_count(degree)), 0.0);
        const auto out = eval_sh<double>(coeffs, Vec3<double>(-0.2, 0.7, 0.4).normalized(), degree);
        CHECK(out.rgb == Vec3<double>::Constant(0.5));
    }
}

TEST_CASE("SH rejects a mis-sized coefficient array") {
    const std::vector<double> coeffs(5, 0.0);
    CHECK_THROWS_AS(eval_sh<double>(coeffs, Vec3<double>(0, 0, 1), 1), ConfigError);
}

TEST_CASE("SH basis is orthonormal on the sphere") {
    // Monte Carlo over a Fibonacci sphere: integral of Y_i Y_j is delta_ij.
    const int n = 20000;
    MatX<double> gram = MatX<double>::Zero(16, 16);
    for (int k = 0; k < n; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
        const auto basis = evaluate_sh_basis<double>(3, Vec3<double>(r * std::cos(phi), r * std::sin(phi), z));
        for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 16; ++j) gram(i, j) += basis.value[static_cast<std::size_t>(i)] * basis.value[static_cast<std::size_t>(j)];
    }
    gram *= 4.0 * std::numbers::pi / n;
    CHECK((gram - MatX<double>::Identity(16, 16)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("SH backward matches finite differences") {
    Rng rng(5);
    std::vector<double> coeffs(48);
    for (auto& c : coeffs) c = uniform(rng, -0.3, 0.3);
    coeffs[0] = coeffs[1] = coeffs[2] = 1.0;
    Vec3<double> dir = Vec3<double>(0.3, -0.5, 0.8).normalized();
    const Vec3<double> w(0.7, -0.4, 1.1);
    const auto fwd = eval_sh<double>(coeffs, dir, 3);
    std::vector<double> d_coeffs(48, 0.0);
    const Vec3<double> d_dir = eval_sh_backward<double>(coeffs, dir, 3, fwd, w, d_coeffs);
    GradCheck check;
    const auto f = [&] { return eval_sh<double>(coeffs, dir, 3).rgb.dot(w); };
    check_block(check, "coeffs", coeffs, d_coeffs, f);
    // The direction gradient treats components as independent.
    check_block(check, "dir", std::span<double>(dir.data(), 3), std::span<const double>(d_dir.data(), 3), f);
    CHECK_MESSAGE(check.max_rel < 1e-5, check.worst);
}

TEST_CASE("2D Gaussian weight examples") {
    Mat2<double> eye = Mat2<double>::Identity();
    CHECK(gaussian_weight<double>(eye, Vec2<double>(0, 0)) == 1.0);
    CHECK(gaussian_weight<double>(eye, Vec2<double>(1, 0)) == doctest::Approx(0.6065306597));
    Mat2<double> cov;
    cov << 4, 0, 0, 1;
    CHECK(gaussian_weight<double>(cov, Vec2<double>(2, 0)) == doctest::Approx(std::exp(-0.5)));
    cov << 2.5, 0.7, 0.7, 1.3;
    CHECK(gaussian_weight<double>(cov, Vec2<double>(0, 0)) == 1.0);
}

TEST_CASE("quaternion normalization backward is tangent") {
    const Vec4<double> q(0.4, -1.2, 0.3, 0.9);
    const Vec4<double> d = normalize_quaternion_backward(q, Vec4<double>(0.2, 0.5, -0.1, 0.3));
    CHECK(std::abs(d.dot(q)) < 1e-12);
}

TEST_CASE("camera round trip and validation") {
    const Camera<double> cam = make_camera<double>(32, 24, 17);
    const Vec3<double> p(0.3, -0.2, 4.0);
    CHECK((cam.to_world(cam.to_camera(p)) - p).norm() < 1e-12);
    CHECK_NOTHROW(cam.validate());
    Camera<double> bad = cam;
    bad.fx = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cam;
    bad.camera_to_world(0, 0) = 3.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gaussian cloud validation and filtering") {
    const Camera<double> cam = make_camera<double>(16, 16);
    GaussianCloud<double> cloud = random_cloud<double>(1, 5, cam, 1);
    CHECK_NOTHROW(cloud.validate());
    cloud.filter({true, false, true, false, true});
    CHECK(cloud.size() == 3);
    CHECK(cloud.sh_coeffs.size() == 3 * 3 * 4);
    cloud.positions[0] = std::nan("");
    CHECK_THROWS_AS(cloud.validate(), ConfigError);
    CHECK_THROWS_AS(GaussianCloud<double>(0, 3).validate(), ConfigError);
}

TEST_CASE("parallel_for visits each item once and rethrows") {
    for (int threads : {1, 3, 8}) {
        for (bool det : {true, false}) {
            std::vector<std::atomic<int>> hits(100);
            parallel_for(100, ExecPolicy{threads, det}, [&](int i, int) { hits[static_cast<std::size_t>(i)]++; });
            for (auto& h : hits) CHECK(h.load() == 1);
        }
    }
    CHECK_THROWS_AS(parallel_for(10, ExecPolicy{4, true},
                                 [](int i, int) {
                                     if (i == 7) throw ConfigError("boom");
                                 }),
                    ConfigError);
}
