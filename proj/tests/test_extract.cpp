#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "pddf/extract.hpp"

using namespace pddf;

namespace {

VStarConfig quick_vstar(std::size_t iters = 1200) {
    VStarConfig cfg;
    cfg.hidden_sizes = {64, 64, 64};
    cfg.iterations = iters;
    cfg.points_per_step = 512;
    cfg.seed = 5;
    return cfg;
}

double angle_deg(const Vec3& a, const Vec3& b) {
    double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("v* field on the analytic sphere", "[slow]") {
    AnalyticEvaluator sphere(AnalyticShape::sphere({0, 0, 0}, 0.6));
    VStarModel vstar = fit_vstar(sphere, quick_vstar());

    SECTION("points toward the nearest surface point") {
        // exterior point: closest direction is inward along the axis
        auto res_out = udf_query(sphere, vstar, {0, 0, 0.9});
        CHECK(angle_deg(res_out.v_star, {0, 0, -1}) < 5.0);
        // interior point: closest direction is outward
        auto res_in = udf_query(sphere, vstar, {0, 0, 0.3});
        CHECK(angle_deg(res_in.v_star, {0, 0, 1}) < 5.0);
    }
    SECTION("UDF estimates the unsigned distance") {
        Rng rng(3);
        double worst = 0.0;
        for (int i = 0; i < 300; ++i) {
            Vec3 p = rng.in_box(BoundingBox{});
            if (p.norm() < 0.05) continue;  // medial point at the centre
            auto res = udf_query(sphere, vstar, p);
            double truth = std::abs(p.norm() - 0.6);
            worst = std::max(worst, std::abs(res.udf - truth));
            CHECK(std::abs(res.udf - truth) < 0.05);
        }
        INFO("worst udf error " << worst);
    }
    SECTION("UDF vanishes on the surface") {
        Rng rng(4);
        for (int i = 0; i < 50; ++i) {
            Vec3 p = rng.unit_vector() * 0.6;
            auto res = udf_query(sphere, vstar, p);
            CHECK(res.udf < 0.05);
        }
    }
    SECTION("v* is the negated normal it sees") {
        Rng rng(5);
        for (int i = 0; i < 100; ++i) {
            Vec3 p = rng.in_box(BoundingBox{});
            if (std::abs(p.norm() - 0.6) < 0.05 || p.norm() < 0.05) continue;
            auto res = udf_query(sphere, vstar, p);
            auto jet = sphere.evaluate_jet({p, res.v_star}, {});
            if (jet.out.xi < 0.5) continue;
            auto n = surface_normal_estimate(jet, res.v_star);
            if (!n) continue;
            CHECK(angle_deg(res.v_star, -*n) < 10.0);
        }
    }
    SECTION("UDF is continuous along a probe segment") {
        // straight segment through the interior, offset from the centre
        Vec3 a{-0.9, 0.25, 0.1}, b{0.9, 0.25, 0.1};
        double prev = 0.0;
        bool first = true;
        for (double t = 0.0; t <= 1.0; t += 0.01 / (b - a).norm()) {
            auto res = udf_query(sphere, vstar, a + (b - a) * t);
            if (!first) CHECK(std::abs(res.udf - prev) < 3e-2);
            prev = res.udf;
            first = false;
        }
    }
}

TEST_CASE("v* training basics") {
    AnalyticEvaluator sphere(AnalyticShape::sphere({0, 0, 0}, 0.6));
    SECTION("zero iterations returns the freshly initialized net") {
        VStarConfig cfg = quick_vstar(0);
        VStarModel m = fit_vstar(sphere, cfg);
        MlpWeights fresh = init_siren_weights(cfg.mlp_shape(), cfg.seed);
        for (std::size_t l = 0; l < fresh.layers.size(); ++l)
            CHECK(m.weights.layers[l].w == fresh.layers[l].w);
    }
    SECTION("candidates decode to unit directions") {
        VStarModel m = fit_vstar(sphere, quick_vstar(0));
        auto dirs = m.candidates_at({0.2, -0.1, 0.4});
        REQUIRE(dirs.size() == 5);
        for (const auto& d : dirs) CHECK(std::abs(d.norm() - 1.0) < 1e-9);
    }
    SECTION("training is deterministic across thread counts") {
        VStarConfig cfg = quick_vstar(20);
        cfg.threads = 1;
        VStarModel a = fit_vstar(sphere, cfg);
        cfg.threads = 4;
        VStarModel b = fit_vstar(sphere, cfg);
        for (std::size_t l = 0; l < a.weights.layers.size(); ++l)
            CHECK(a.weights.layers[l].w == b.weights.layers[l].w);
    }
}

TEST_CASE("explicit point-cloud sampling from an exact field") {
    AnalyticEvaluator sphere(AnalyticShape::sphere({0, 0, 0}, 0.7));
    PointCloudConfig cfg;
    cfg.n_points = 512;
    cfg.seed = 9;
    auto pts = sample_point_cloud(sphere, cfg);
    REQUIRE(pts.size() == cfg.n_points);
    double worst = 0.0;
    for (const auto& q : pts) worst = std::max(worst, std::abs(q.norm() - 0.7));
    CHECK(worst < 1e-3);

    SECTION("deterministic given the seed, at any thread count") {
        auto again = sample_point_cloud(sphere, cfg);
        CHECK(pts == again);
        PointCloudConfig threaded = cfg;
        threaded.threads = 4;
        auto par = sample_point_cloud(sphere, threaded);
        CHECK(pts == par);
    }
    SECTION("requested count is honoured with oversampling in play") {
        PointCloudConfig few = cfg;
        few.n_points = 97;
        CHECK(sample_point_cloud(sphere, few).size() == 97);
    }
}

TEST_CASE("chamfer distance and f-score") {
    SECTION("identical clouds: (0, 100, 100)") {
        std::vector<Vec3> a = {{0, 0, 0}, {0.5, 0.2, -0.1}, {-0.3, 0.9, 0.4}};
        auto m = chamfer_f_score(a, a);
        CHECK(m.chamfer == 0.0);
        CHECK(m.f_tau == 100.0);
        CHECK(m.f_2tau == 100.0);
    }
    SECTION("hand-computed single-point case") {
        std::vector<Vec3> a = {{0, 0, 0}};
        std::vector<Vec3> b = {{0.01, 0, 0}};
        auto m = chamfer_f_score(a, b, 1e-4);
        CHECK(m.chamfer == Catch::Approx(0.2).margin(1e-12));
        // squared distance exactly 1e-4: the inclusive threshold keeps it
        CHECK(m.f_tau == 100.0);
        CHECK(m.f_2tau == 100.0);
    }
    SECTION("brute force and grid index agree bitwise") {
        Rng rng(13);
        std::vector<Vec3> a, b;
        for (int i = 0; i < 700; ++i) a.push_back(rng.in_box(BoundingBox{}));
        for (int i = 0; i < 900; ++i) b.push_back(rng.in_box(BoundingBox{}));
        auto brute = chamfer_f_score(a, b, 1e-4, false);
        auto indexed = chamfer_f_score(a, b, 1e-4, true);
        CHECK(brute.chamfer == indexed.chamfer);
        CHECK(brute.f_tau == indexed.f_tau);
        CHECK(brute.f_2tau == indexed.f_2tau);
    }
    SECTION("monotone thresholds and symmetry") {
        Rng rng(14);
        std::vector<Vec3> a, b;
        for (int i = 0; i < 200; ++i) a.push_back(rng.in_box(BoundingBox{}) * 0.1);
        for (int i = 0; i < 150; ++i) b.push_back(rng.in_box(BoundingBox{}) * 0.1);
        auto ab = chamfer_f_score(a, b);
        auto ba = chamfer_f_score(b, a);
        CHECK(ab.f_2tau >= ab.f_tau);
        CHECK(ab.chamfer == Catch::Approx(ba.chamfer).margin(1e-12));
        CHECK(ab.f_tau == Catch::Approx(ba.f_tau).margin(1e-12));
    }
    SECTION("empty inputs are rejected") {
        std::vector<Vec3> a = {{0, 0, 0}}, none;
        CHECK_THROWS(chamfer_f_score(a, none));
        CHECK_THROWS(chamfer_f_score(none, a));
    }
}

TEST_CASE("xyz files round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "pddf_extract_test";
    fs::create_directories(dir);
    std::vector<Vec3> pts = {{0.125, -0.5, 0.75}, {1, 2, 3}};
    std::string path = (dir / "pc.xyz").string();
    write_xyz(pts, path);
    auto back = read_xyz(path);
    REQUIRE(back.size() == 2);
    CHECK((back[0] - pts[0]).norm() < 1e-8);
    CHECK((back[1] - pts[1]).norm() < 1e-8);
    fs::remove_all(dir);
}
