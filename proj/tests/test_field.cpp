#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "pddf/field.hpp"

using namespace pddf;

namespace {

SirenConfig small_config() {
    SirenConfig cfg;
    cfg.hidden_sizes = {32, 32};
    return cfg;
}

PddfModel zero_head_model() {
    PddfModel m = init_siren(small_config(), 11);
    auto& head = m.weights.layers.back();
    std::fill(head.w.begin(), head.w.end(), 0.0f);
    std::fill(head.b.begin(), head.b.end(), 0.0f);
    return m;
}

}  // namespace

TEST_CASE("siren initialization") {
    SECTION("seeded twice gives identical parameters") {
        PddfModel a = init_siren(small_config(), 99);
        PddfModel b = init_siren(small_config(), 99);
        for (std::size_t l = 0; l < a.weights.layers.size(); ++l) {
            CHECK(a.weights.layers[l].w == b.weights.layers[l].w);
            CHECK(a.weights.layers[l].b == b.weights.layers[l].b);
        }
    }
    SECTION("first-layer weights respect the 1/fan_in bound") {
        PddfModel m = init_siren(small_config(), 3);
        for (float w : m.weights.layers[0].w) {
            CHECK(w <= 1.0f / 6.0f);
            CHECK(w >= -1.0f / 6.0f);
        }
    }
    SECTION("later layers respect sqrt(6/fan_in)/omega0") {
        PddfModel m = init_siren(small_config(), 3);
        float bound = static_cast<float>(std::sqrt(6.0 / 32.0));
        for (float w : m.weights.layers[1].w) CHECK(std::abs(w) <= bound);
    }
    SECTION("zeroed output head maps to the neutral output") {
        Field f(zero_head_model());
        FieldOutput out = f.eval({{0.2, -0.1, 0.4}, {0, 0, 1}});
        CHECK(out.d[0] == 0.0);
        CHECK(out.d[1] == 0.0);
        CHECK(out.w1 == 0.5);
        CHECK(out.xi == 0.5);
        CHECK(out.i_star == 0);  // exact tie picks the first component
    }
    SECTION("K != 2 is rejected") {
        SirenConfig cfg = small_config();
        cfg.K = 3;
        CHECK_THROWS(init_siren(cfg, 1));
    }
}

TEST_CASE("field evaluation basics") {
    PddfModel m = init_siren(small_config(), 17);
    Field f(m);
    OrientedPoint op{{0.3, -0.2, 0.5}, {0.6, 0.0, 0.8}};

    SECTION("deterministic") {
        FieldOutput a = f.eval(op);
        FieldOutput b = f.eval(op);
        CHECK(a.d[0] == b.d[0]);
        CHECK(a.xi == b.xi);
    }
    SECTION("direction scaling is removed exactly") {
        FieldOutput a = f.eval(op);
        FieldOutput b = f.eval({op.p, op.v * 2.0});
        CHECK(a.d[0] == b.d[0]);
        CHECK(a.d[1] == b.d[1]);
        CHECK(a.w1 == b.w1);
        CHECK(a.xi == b.xi);
    }
    SECTION("outputs are rectified and in range") {
        Rng rng(4);
        for (int i = 0; i < 200; ++i) {
            FieldOutput out = f.eval({rng.in_box(BoundingBox{}), rng.unit_vector()});
            CHECK(out.d[0] >= 0.0);
            CHECK(out.d[1] >= 0.0);
            CHECK(out.w1 > 0.0);
            CHECK(out.w1 < 1.0);
            CHECK(out.xi > 0.0);
            CHECK(out.xi < 1.0);
        }
    }
    SECTION("non-finite input is rejected") {
        CHECK_THROWS(f.eval({{kInf, 0, 0}, {0, 0, 1}}));
        CHECK_THROWS(f.eval({{0, 0, 0}, {0, 0, 0}}));
    }
}

TEST_CASE("single-unit sine network propagates exact tangents") {
    // d(x) = sin(x0) through the raw engine: gradient cos(0) = 1, Hessian 0.
    MlpShape shape{6, {1}, 1, 1.0};
    MlpWeights w;
    w.shape = shape;
    w.layers.push_back({1, 6, {1, 0, 0, 0, 0, 0}, {0}});
    w.layers.push_back({1, 1, {1}, {0}});
    SirenMlp<double> net(w);

    SirenMlp<double>::Vec x = SirenMlp<double>::Vec::Zero(6);
    std::vector<SirenMlp<double>::Vec> tangents(1, SirenMlp<double>::Vec::Zero(6));
    tangents[0](0) = 1.0;
    auto jet = net.jet_single(x, tangents, {{0, 0}});
    CHECK(jet.y(0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(jet.dy[0](0) == Catch::Approx(1.0).margin(1e-15));
    CHECK(jet.d2y[0](0) == Catch::Approx(0.0).margin(1e-15));

    // off the origin: d' = cos(x0), d'' = -sin(x0)
    x(0) = 0.7;
    auto jet2 = net.jet_single(x, tangents, {{0, 0}});
    CHECK(jet2.dy[0](0) == Catch::Approx(std::cos(0.7)).epsilon(1e-14));
    CHECK(jet2.d2y[0](0) == Catch::Approx(-std::sin(0.7)).epsilon(1e-13));
}

TEST_CASE("jets match central finite differences") {
    PddfModel m = init_siren(small_config(), 23);
    Field f(m);
    Rng rng(31);
    const double h = 1e-3;
    JetRequest want;
    want.v_grads = true;

    int tested = 0;
    while (tested < 300) {
        OrientedPoint op{rng.in_box(BoundingBox{}), rng.unit_vector()};
        FieldJet jet = f.eval_jet(op, want);
        ++tested;

        auto raw = [&](const OrientedPoint& q) { return f.eval(q); };

        for (int k = 0; k < 3; ++k) {
            Vec3 dp{};
            dp[k] = h;
            FieldOutput plus = raw({op.p + dp, op.v});
            FieldOutput minus = raw({op.p - dp, op.v});
            // depth components: skip stencils that straddle the ReLU kink
            for (int i = 0; i < 2; ++i) {
                if (plus.d[i] > 1e-2 && minus.d[i] > 1e-2) {
                    double fd = (plus.d[i] - minus.d[i]) / (2 * h);
                    double ref = jet.grad_p_d[i][k];
                    CHECK(std::abs(fd - ref) <= 1e-4 * std::max(1.0, std::abs(ref)));
                }
            }
            double fdw = (plus.w1 - minus.w1) / (2 * h);
            CHECK(std::abs(fdw - jet.grad_p_w1[k]) <= 1e-4 * std::max(1.0, std::abs(jet.grad_p_w1[k])));
            double fdx = (plus.xi - minus.xi) / (2 * h);
            CHECK(std::abs(fdx - jet.grad_p_xi[k]) <= 1e-4 * std::max(1.0, std::abs(jet.grad_p_xi[k])));
        }

        // view derivatives along a random rotational perturbation
        Vec3 w = rng.unit_vector();
        Vec3 dv = w.cross(op.v);
        if (dv.norm() > 1e-3) {
            FieldOutput plus = raw({op.p, (op.v + dv * h).normalized()});
            FieldOutput minus = raw({op.p, (op.v - dv * h).normalized()});
            for (int i = 0; i < 2; ++i) {
                if (plus.d[i] > 1e-2 && minus.d[i] > 1e-2) {
                    double fd = (plus.d[i] - minus.d[i]) / (2 * h);
                    double ref = jet.grad_v_d[i].dot(dv);
                    CHECK(std::abs(fd - ref) <= 2e-4 * std::max(1.0, std::abs(ref)));
                }
            }
        }
    }
}

TEST_CASE("second directional derivatives match finite differences") {
    PddfModel m = init_siren(small_config(), 27);
    Field f(m);
    Rng rng(41);
    const double h = 1e-3;

    for (int trial = 0; trial < 50; ++trial) {
        OrientedPoint op{rng.in_box(BoundingBox{}), rng.unit_vector()};
        Vec3 t1 = rng.unit_vector();
        Vec3 t2 = rng.unit_vector();
        JetRequest want;
        want.second_pairs = {{t1, t1}, {t1, t2}};
        FieldJet jet = f.eval_jet(op, want);
        int i = jet.out.i_star;

        auto depth = [&](const Vec3& p) { return f.eval({p, op.v}).d[i]; };
        double d0 = depth(op.p);
        if (d0 < 5e-2) continue;  // stay clear of the rectifier

        double fd11 = (depth(op.p + t1 * h) - 2 * d0 + depth(op.p - t1 * h)) / (h * h);
        CHECK(std::abs(fd11 - jet.second[0]) <= 1e-3 * std::max(1.0, std::abs(jet.second[0])));

        double fd12 = (depth(op.p + (t1 + t2) * h) - depth(op.p + (t1 - t2) * h) -
                       depth(op.p + (t2 - t1) * h) + depth(op.p - (t1 + t2) * h)) /
                      (4 * h * h);
        CHECK(std::abs(fd12 - jet.second[1]) <= 1e-3 * std::max(1.0, std::abs(jet.second[1])));
    }
}

TEST_CASE("normal estimation sign convention") {
    FieldJet jet;
    jet.out.i_star = 0;
    jet.grad_p_d[0] = {0, 0, 2};
    auto n = surface_normal_estimate(jet, {0, 0, -1});
    REQUIRE(n.has_value());
    CHECK((*n - Vec3{0, 0, 1}).norm() < 1e-12);

    jet.grad_p_d[0] = {0, 0, -2};
    auto flipped = surface_normal_estimate(jet, {0, 0, -1});
    REQUIRE(flipped.has_value());
    CHECK((*flipped - Vec3{0, 0, 1}).norm() < 1e-12);

    jet.grad_p_d[0] = {0, 0, 1e-9};
    CHECK_FALSE(surface_normal_estimate(jet, {0, 0, -1}).has_value());
}

TEST_CASE("curvatures of analytic shapes") {
    Rng rng(53);
    SECTION("sphere seen from outside: C_H = 2/r, C_K = 1/r^2") {
        for (double r : {1.0, 0.9, 0.5}) {
            AnalyticEvaluator eval(AnalyticShape::sphere({0, 0, 0}, r));
            for (int i = 0; i < 50; ++i) {
                Vec3 dir = rng.unit_vector();
                OrientedPoint op{dir * 2.0, -dir};
                // nudge the ray so it still hits but away from dead centre
                Vec3 t = rng.unit_vector().cross(dir);
                if (t.norm() < 0.3) continue;
                op.v = (-dir + t * 0.2).normalized();
                JetRequest want;
                FieldJet probe = eval.evaluate_jet(op, want);
                if (probe.out.xi < 0.5) continue;
                auto n = surface_normal_estimate(probe, op.v);
                if (!n || std::abs(n->dot(op.v)) < 0.2) continue;
                auto [tx, ty] = tangent_basis(*n, rng);
                want.second_pairs = {{tx, tx}, {tx, ty}, {ty, tx}, {ty, ty}};
                FieldJet jet = eval.evaluate_jet(op, want);
                auto curv = curvature_at(jet, *n, op.v);
                REQUIRE(curv.has_value());
                CHECK(curv->mean == Catch::Approx(2.0 / r).epsilon(1e-9));
                CHECK(curv->gaussian == Catch::Approx(1.0 / (r * r)).epsilon(1e-9));
            }
        }
    }
    SECTION("plane is flat") {
        AnalyticEvaluator eval(AnalyticShape::plane({0, 0, -0.5}, {0, 0, 1}));
        OrientedPoint op{{0.1, 0.2, 0.5}, Vec3{0.2, 0.1, -1.0}.normalized()};
        JetRequest want;
        FieldJet probe = eval.evaluate_jet(op, want);
        auto n = surface_normal_estimate(probe, op.v);
        REQUIRE(n.has_value());
        auto [tx, ty] = tangent_basis(*n, rng);
        want.second_pairs = {{tx, tx}, {tx, ty}, {ty, tx}, {ty, ty}};
        FieldJet jet = eval.evaluate_jet(op, want);
        auto curv = curvature_at(jet, *n, op.v);
        REQUIRE(curv.has_value());
        CHECK(std::abs(curv->mean) < 1e-12);
        CHECK(std::abs(curv->gaussian) < 1e-12);
    }
}

TEST_CASE("checkpoint round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "pddf_field_test";
    fs::create_directories(dir);
    fs::path path = dir / "model.ddfm";

    SirenConfig cfg = small_config();
    PddfModel m = init_siren(cfg, 67);
    m.meta = {{"note", "round trip"}};
    save_model(m, path.string());
    PddfModel back = load_model(path.string());

    REQUIRE(back.weights.layers.size() == m.weights.layers.size());
    for (std::size_t l = 0; l < m.weights.layers.size(); ++l) {
        CHECK(back.weights.layers[l].w == m.weights.layers[l].w);
        CHECK(back.weights.layers[l].b == m.weights.layers[l].b);
    }
    CHECK(back.config == m.config);
    CHECK(back.meta.at("note") == "round trip");

    SECTION("truncated payload is rejected") {
        auto size = fs::file_size(path);
        fs::resize_file(path, size - 16);
        CHECK_THROWS_WITH(load_model(path.string()),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("wrong magic is rejected") {
        std::ofstream bad(path, std::ios::binary);
        bad << "NOPE!\njunk";
        bad.close();
        CHECK_THROWS_WITH(load_model(path.string()),
                          Catch::Matchers::ContainsSubstring("DDFM1"));
    }
    SECTION("shape mismatch between header and config is rejected") {
        PddfModel tampered = m;
        tampered.config.hidden_sizes = {32, 48};
        // keep the old layer shapes: loader must notice the inconsistency
        save_model(tampered, path.string());
        CHECK_THROWS(load_model(path.string()));
    }
    fs::remove_all(dir);
}
