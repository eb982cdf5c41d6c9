#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "pddf/trainer.hpp"

using namespace pddf;

namespace {

SirenConfig mini_arch(std::vector<int> hidden = {32, 32}) {
    SirenConfig cfg;
    cfg.hidden_sizes = std::move(hidden);
    return cfg;
}

Dataset mini_sphere_dataset(std::size_t per_big, std::size_t per_small,
                            double radius = 0.9, std::uint64_t seed = 7) {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, radius));
    Dataset ds;
    ds.spec.counts = {per_big, per_big, per_small, per_small, per_small, per_small};
    ds.spec.seed = seed;
    ds.oracle_description = oracle.describe();
    for (SampleType t : kAllSampleTypes) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(t));
        auto samples = draw_samples(oracle, t, ds.spec.count(t), ds.spec, rng);
        ds.samples.insert(ds.samples.end(), samples.begin(), samples.end());
    }
    return ds;
}

TrainConfig mini_train(std::size_t iters, std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.iterations = iters;
    cfg.batch_counts = {240, 240, 120, 120, 120, 120};
    cfg.batch_reg = 40;
    cfg.seed = seed;
    cfg.report_interval = 50;
    cfg.heldout_per_type = 500;
    return cfg;
}

}  // namespace

TEST_CASE("adam basics") {
    MlpShape shape{1, {1}, 1, 1.0};
    MlpWeights w;
    w.shape = shape;
    w.layers.push_back({1, 1, {0.5f}, {0.25f}});
    w.layers.push_back({1, 1, {0.5f}, {1.0f}});  // head bias is the test scalar
    SirenMlp<double> net(w);
    Adam<double> adam(net);

    SECTION("zero gradient leaves parameters unchanged") {
        SirenMlp<double>::Grads g;
        g.init_like(net);
        auto before = net.export_weights();
        adam.step(net, g, 0.1, 0.9, 0.999, 1e-8, 1);
        auto after = net.export_weights();
        for (std::size_t l = 0; l < before.layers.size(); ++l) {
            CHECK(before.layers[l].w == after.layers[l].w);
            CHECK(before.layers[l].b == after.layers[l].b);
        }
    }
    SECTION("1-D quadratic matches a scalar reference run") {
        double& x = net.layers()[1].b(0);
        x = 1.0;
        // independent textbook-Adam reference evolved alongside
        double rx = 1.0, rm = 0.0, rv = 0.0;
        for (int t = 1; t <= 100; ++t) {
            SirenMlp<double>::Grads g;
            g.init_like(net);
            g.layers[1].b(0) = 2.0 * x;  // d/dx of x^2
            adam.step(net, g, 0.1, 0.9, 0.999, 1e-8, static_cast<std::size_t>(t));

            double rg = 2.0 * rx;
            rm = 0.9 * rm + 0.1 * rg;
            rv = 0.999 * rv + 0.001 * rg * rg;
            double mh = rm / (1.0 - std::pow(0.9, t));
            double vh = rv / (1.0 - std::pow(0.999, t));
            rx -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
            CHECK(x == Catch::Approx(rx).margin(1e-12));
        }
        // Adam overshoots through zero on a quadratic, so |x| is not
        // monotone; what holds is convergence close to the minimum.
        CHECK(std::abs(x) < 0.05);
        CHECK(std::abs(x) < 0.1 * 1.0);
    }
    SECTION("non-finite gradients are rejected with the iteration index") {
        SirenMlp<double>::Grads g;
        g.init_like(net);
        g.layers[0].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH(adam.step(net, g, 0.1, 0.9, 0.999, 1e-8, 37),
                          Catch::Matchers::ContainsSubstring("37"));
    }
}

TEST_CASE("zero iterations returns the initialized model") {
    Dataset ds = mini_sphere_dataset(400, 200);
    TrainConfig cfg = mini_train(0);
    SirenConfig arch = mini_arch();
    auto [model, report] = fit_shape(ds, arch, cfg);
    PddfModel fresh = init_siren(arch, cfg.seed);
    for (std::size_t l = 0; l < fresh.weights.layers.size(); ++l) {
        CHECK(model.weights.layers[l].w == fresh.weights.layers[l].w);
        CHECK(model.weights.layers[l].b == fresh.weights.layers[l].b);
    }
    CHECK(report.history.empty());
}

TEST_CASE("training is deterministic across runs and thread counts") {
    Dataset ds = mini_sphere_dataset(400, 200);
    TrainConfig cfg = mini_train(30);
    SirenConfig arch = mini_arch({24, 24});

    cfg.threads = 1;
    auto [m1, r1] = fit_shape(ds, arch, cfg);
    auto [m2, r2] = fit_shape(ds, arch, cfg);
    cfg.threads = 4;
    auto [m4, r4] = fit_shape(ds, arch, cfg);

    for (std::size_t l = 0; l < m1.weights.layers.size(); ++l) {
        CHECK(m1.weights.layers[l].w == m2.weights.layers[l].w);
        CHECK(m1.weights.layers[l].w == m4.weights.layers[l].w);
        CHECK(m1.weights.layers[l].b == m4.weights.layers[l].b);
    }
    REQUIRE(r1.history.size() == r4.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i)
        CHECK(r1.history[i].losses.total == r4.history[i].losses.total);
}

TEST_CASE("minibatch counts must fit the dataset pools") {
    Dataset ds = mini_sphere_dataset(100, 50);
    TrainConfig cfg = mini_train(5);
    cfg.batch_counts = {240, 240, 120, 120, 120, 120};  // bigger than the pools
    CHECK_THROWS_WITH(fit_shape(ds, mini_arch(), cfg),
                      Catch::Matchers::ContainsSubstring("exceeds"));
}

TEST_CASE("short sphere fit: loss decreases, scheduler behaves, report is shaped") {
    Dataset ds = mini_sphere_dataset(2000, 1000);
    TrainConfig cfg = mini_train(800, 3);
    cfg.plateau_min_gap = 200;
    cfg.plateau_patience = 100;
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "pddf_trainer_test";
    fs::create_directories(dir);
    cfg.checkpoint_path = (dir / "ckpt.ddfm").string();
    cfg.log_path = (dir / "log.jsonl").string();

    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.9));
    auto [model, report] = fit_shape(ds, mini_arch(), cfg, &oracle);

    REQUIRE(report.history.size() == cfg.iterations / cfg.report_interval);
    // smoothed total at the end is below the early value
    auto smoothed = [&](std::size_t idx) {
        double s = 0.0;
        int n = 0;
        for (std::size_t i = idx >= 1 ? idx - 1 : 0; i <= idx + 1 && i < report.history.size(); ++i) {
            s += report.history[i].losses.total;
            ++n;
        }
        return s / n;
    };
    CHECK(smoothed(report.history.size() - 1) < smoothed(1));

    // the learning rate never increases and reductions respect the gap
    std::vector<std::size_t> reductions;
    for (std::size_t i = 1; i < report.history.size(); ++i) {
        CHECK(report.history[i].lr <= report.history[i - 1].lr + 1e-15);
        if (report.history[i].lr < report.history[i - 1].lr)
            reductions.push_back(report.history[i].iter);
    }
    for (std::size_t i = 1; i < reductions.size(); ++i)
        CHECK(reductions[i] - reductions[i - 1] >= cfg.plateau_min_gap);

    // checkpoint on disk equals the returned model
    PddfModel loaded = load_model(cfg.checkpoint_path);
    for (std::size_t l = 0; l < model.weights.layers.size(); ++l)
        CHECK(loaded.weights.layers[l].w == model.weights.layers[l].w);

    // held-out metrics exist and look sane for a short fit
    REQUIRE(report.has_metrics);
    const auto& a = report.metrics.of(SampleType::A);
    CHECK(a.n == cfg.heldout_per_type);
    CHECK(a.n_visible == a.n);  // A-type samples are visible by construction
    CHECK(a.depth_l1 < 0.5);

    // training log is valid JSONL with one object per report interval
    std::ifstream log(cfg.log_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("iter"));
        CHECK(j.contains("lr"));
        CHECK(j.contains("total"));
        ++lines;
    }
    CHECK(lines == report.history.size());
    fs::remove_all(dir);
}

TEST_CASE("ablating a sample type hurts that type most", "[slow]") {
    Dataset ds = mini_sphere_dataset(6000, 3000);
    TrainConfig cfg = mini_train(2500, 5);
    cfg.batch_counts = {360, 360, 180, 180, 180, 180};
    cfg.batch_reg = 60;
    cfg.heldout_per_type = 2000;
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.9));

    auto [ablated, baseline] = ablation_experiment(ds, mini_arch({48, 48, 48}), cfg,
                                                   SampleType::U, oracle);
    // 6x2 metrics grid on both sides
    for (SampleType t : kAllSampleTypes) {
        CHECK(ablated.of(t).n > 0);
        CHECK(std::isfinite(ablated.of(t).depth_l1));
        CHECK(std::isfinite(ablated.of(t).visibility_bce));
        CHECK(std::isfinite(baseline.of(t).depth_l1));
    }
    // the paper's qualitative finding, directionally: U error is worst when
    // U data was ablated
    CHECK(ablated.of(SampleType::U).depth_l1 > baseline.of(SampleType::U).depth_l1);
}
