#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pddf/sampler.hpp"

using namespace pddf;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("surface samples sit on the shape") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 1.0));
    DatasetSpec spec;
    Rng rng(1);
    auto samples = draw_samples(oracle, SampleType::S, 2000, spec, rng);
    for (const auto& s : samples) {
        CHECK(s.kind == SampleType::S);
        CHECK(std::abs(s.op.p.norm() - 1.0) <= 1e-9);
        CHECK(s.visible);
        CHECK(s.depth == 0.0);
        REQUIRE(s.has_normal);
    }
}

TEST_CASE("offset samples sit at epsilon_O from the surface") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 1.0));
    DatasetSpec spec;
    spec.boundary_bias = 0.0;  // isolate the offset construction
    Rng rng(2);
    auto samples = draw_samples(oracle, SampleType::O, 2000, spec, rng);
    int visible = 0;
    for (const auto& s : samples) {
        CHECK(std::abs(std::abs(s.op.p.norm() - 1.0) - 0.05) <= 1e-9);
        visible += s.visible ? 1 : 0;
    }
    // outward offsets mostly miss a convex shape, inward ones hit
    CHECK(visible > 500);
    CHECK(visible < 1500);
}

TEST_CASE("bounding samples start on the box and point inward") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.7));
    DatasetSpec spec;
    Rng rng(3);
    auto samples = draw_samples(oracle, SampleType::B, 2000, spec, rng);
    for (const auto& s : samples) {
        double m = std::max({std::abs(s.op.p.x), std::abs(s.op.p.y), std::abs(s.op.p.z)});
        CHECK(m == 1.0);
        // v must point to the interior: inward normal of the face it sits on
        for (int a = 0; a < 3; ++a) {
            if (std::abs(s.op.p[a]) == 1.0) {
                double inward = -s.op.p[a] * s.op.v[a];
                CHECK(inward > 0.0);
            }
        }
    }
}

TEST_CASE("uniform visible fraction matches a Monte-Carlo estimate") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.9));
    DatasetSpec spec;
    Rng rng(4);
    auto samples = draw_samples(oracle, SampleType::U, 50000, spec, rng);
    double frac = 0.0;
    for (const auto& s : samples) frac += s.visible ? 1.0 : 0.0;
    frac /= static_cast<double>(samples.size());

    Rng mc(999);
    double ref = 0.0;
    const int n = 500000;
    for (int i = 0; i < n; ++i) {
        OrientedPoint op{mc.in_box(BoundingBox{}), mc.unit_vector()};
        ref += oracle.raycast(op).visible ? 1.0 : 0.0;
    }
    ref /= n;
    CHECK(std::abs(frac - ref) < 0.02);
}

TEST_CASE("at-surface and tangent samples are always visible") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.8));
    DatasetSpec spec;
    Rng rng(5);
    for (SampleType kind : {SampleType::A, SampleType::T}) {
        auto samples = draw_samples(oracle, kind, 2000, spec, rng);
        for (const auto& s : samples) {
            CHECK(s.visible);
            REQUIRE(s.has_normal);
            // q = p + d v lies on the sphere
            Vec3 q = s.op.p + s.op.v * s.depth;
            CHECK(std::abs(q.norm() - 0.8) < 1e-7);
        }
    }
}

TEST_CASE("tangent construction keeps v in the tangent plane") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.8));
    DatasetSpec spec;
    spec.boundary_bias = 0.0;
    Rng rng(6);
    auto samples = draw_samples(oracle, SampleType::T, 1000, spec, rng);
    for (const auto& s : samples) {
        // the stored normal is the anchor normal whenever the grazing recast
        // missed; for a convex shape that is essentially always
        CHECK(std::abs(s.normal.dot(s.op.v)) <= 1e-9);
    }
}

TEST_CASE("visible samples reproduce the oracle depth when re-cast") {
    AnalyticOracle oracle(AnalyticShape::sphere({0.1, 0.0, -0.1}, 0.75));
    DatasetSpec spec;
    Rng rng(7);
    for (SampleType kind : {SampleType::U, SampleType::A, SampleType::B, SampleType::O}) {
        auto samples = draw_samples(oracle, kind, 500, spec, rng);
        for (const auto& s : samples) {
            if (!s.visible) continue;
            HitRecord again = oracle.raycast(s.op);
            REQUIRE(again.visible);
            CHECK(std::abs(again.depth - s.depth) <= 1e-9);
        }
    }
}

TEST_CASE("boundary bias projects points onto the box") {
    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.8));
    DatasetSpec spec;
    spec.boundary_bias = 1.0;
    Rng rng(8);
    for (SampleType kind : {SampleType::A, SampleType::T, SampleType::O}) {
        auto samples = draw_samples(oracle, kind, 500, spec, rng);
        for (const auto& s : samples) {
            double m = std::max({std::abs(s.op.p.x), std::abs(s.op.p.y), std::abs(s.op.p.z)});
            CHECK(std::abs(m - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("surface-dependent types require a surface") {
    MeshOracle empty{TriangleMesh{}};
    DatasetSpec spec;
    Rng rng(9);
    CHECK_THROWS(draw_samples(empty, SampleType::S, 1, spec, rng));
    CHECK_THROWS(draw_samples(empty, SampleType::A, 1, spec, rng));
    // uniform samples work fine; everything is just invisible
    auto u = draw_samples(empty, SampleType::U, 10, spec, rng);
    for (const auto& s : u) CHECK_FALSE(s.visible);
}

TEST_CASE("mesh oracle labels match the analytic sphere closely") {
    MeshOracle mesh(make_icosphere(4));
    DatasetSpec spec;
    Rng rng(10);
    auto samples = draw_samples(mesh, SampleType::A, 300, spec, rng);
    for (const auto& s : samples) {
        CHECK(s.visible);
        Vec3 q = s.op.p + s.op.v * s.depth;
        CHECK(std::abs(q.norm() - 1.0) < 5e-3);
    }
}

TEST_CASE("dataset file round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "pddf_sampler_test";
    fs::create_directories(dir);

    AnalyticOracle oracle(AnalyticShape::sphere({0, 0, 0}, 0.9));
    DatasetSpec spec;
    spec.counts = {200, 200, 100, 100, 100, 100};
    spec.seed = 42;

    SECTION("same seed gives byte-identical files") {
        fs::path a = dir / "a.ddfd", b = dir / "b.ddfd";
        build_dataset(oracle, spec, a.string());
        build_dataset(oracle, spec, b.string());
        CHECK(slurp(a) == slurp(b));
        CHECK(fs::file_size(a) > 0);
    }
    SECTION("reload recovers every record") {
        fs::path p = dir / "c.ddfd";
        build_dataset(oracle, spec, p.string());
        Dataset ds = load_dataset(p.string());
        CHECK(ds.samples.size() == spec.total());
        CHECK(ds.spec.seed == 42);
        CHECK(ds.spec.offset_epsilon == spec.offset_epsilon);
        for (SampleType t : kAllSampleTypes)
            CHECK(ds.of_kind(t).size() == spec.count(t));
        // re-encode: loader and writer agree bit-exactly
        std::string buf;
        for (const auto& s : ds.samples) detail::encode_record(buf, s);
        std::string file = slurp(p);
        CHECK(file.substr(file.size() - buf.size()) == buf);
    }
    SECTION("all-zero counts still produce a valid file") {
        fs::path p = dir / "empty.ddfd";
        DatasetSpec zero;
        zero.counts = {0, 0, 0, 0, 0, 0};
        build_dataset(oracle, zero, p.string());
        Dataset ds = load_dataset(p.string());
        CHECK(ds.samples.empty());
    }
    SECTION("truncated payload is detected") {
        fs::path p = dir / "trunc.ddfd";
        build_dataset(oracle, spec, p.string());
        fs::resize_file(p, fs::file_size(p) - 21);
        CHECK_THROWS_WITH(load_dataset(p.string()),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    fs::remove_all(dir);
}
