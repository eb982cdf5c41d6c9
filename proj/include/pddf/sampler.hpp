#pragma once

#include <array>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "pddf/geometry.hpp"
#include "pddf/rng.hpp"

namespace pddf {

enum class SampleType : std::uint8_t { U = 0, A = 1, B = 2, S = 3, T = 4, O = 5 };

constexpr std::array<SampleType, 6> kAllSampleTypes = {
    SampleType::U, SampleType::A, SampleType::B,
    SampleType::S, SampleType::T, SampleType::O};

inline char sample_type_letter(SampleType t) {
    return "UABSTO"[static_cast<int>(t)];
}
inline SampleType sample_type_from_letter(char c) {
    switch (c) {
        case 'U': return SampleType::U;
        case 'A': return SampleType::A;
        case 'B': return SampleType::B;
        case 'S': return SampleType::S;
        case 'T': return SampleType::T;
        case 'O': return SampleType::O;
    }
    throw std::invalid_argument(std::string("unknown sample type: ") + c);
}

/// One labelled oriented point. The normal is present iff the sample is
/// visible; for S/T samples it is the normal at the construction surface
/// point, which is where the weight field is asked to transition.
struct TrainingSample {
    OrientedPoint op;
    bool visible = false;
    double depth = 0.0;
    bool has_normal = false;
    UnitVec3 normal{};
    SampleType kind = SampleType::U;
};

struct DatasetSpec {
    std::array<std::size_t, 6> counts = {250000, 250000, 125000,
                                         125000, 125000, 125000};  // U A B S T O
    double boundary_bias = 0.10;
    double offset_epsilon = 0.05;
    std::uint64_t seed = 0;

    std::size_t count(SampleType t) const { return counts[static_cast<int>(t)]; }
    std::size_t& count(SampleType t) { return counts[static_cast<int>(t)]; }
    std::size_t total() const {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
};

/// Ground-truth source: a mesh raycaster or a closed-form shape, both over
/// the fixed [-1,1]^3 field domain.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual HitRecord raycast(const OrientedPoint& op) const = 0;
    virtual bool has_surface() const = 0;
    virtual SurfacePoint sample_surface(Rng& rng) const = 0;
    virtual std::string describe() const = 0;
    BoundingBox domain() const { return BoundingBox{}; }
};

class MeshOracle final : public Oracle {
public:
    explicit MeshOracle(TriangleMesh mesh)
        : mesh_(std::move(mesh)), bvh_(mesh_) {
        total_area_ = mesh_.total_area();
        if (total_area_ > 0.0) {
            cdf_.resize(mesh_.tri_areas.size());
            double acc = 0.0;
            for (std::size_t i = 0; i < cdf_.size(); ++i) {
                acc += mesh_.tri_areas[i];
                cdf_[i] = acc;
            }
        }
    }

    HitRecord raycast(const OrientedPoint& op) const override {
        return bvh_.raycast(op);
    }
    bool has_surface() const override { return total_area_ > 0.0; }
    SurfacePoint sample_surface(Rng& rng) const override {
        if (!has_surface()) throw std::runtime_error("mesh oracle has no surface to sample");
        double r = rng.uniform01() * total_area_;
        auto it = std::lower_bound(cdf_.begin(), cdf_.end(), r);
        std::size_t ti = std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1);
        const auto& tri = mesh_.triangles[ti];
        double u = rng.uniform01(), v = rng.uniform01();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        Vec3 q = mesh_.vertices[tri[0]] * (1.0 - u - v) +
                 mesh_.vertices[tri[1]] * u + mesh_.vertices[tri[2]] * v;
        return {q, mesh_.tri_normals[ti]};
    }
    std::string describe() const override {
        return "mesh(" + std::to_string(mesh_.triangle_count()) + " tris)";
    }
    const TriangleMesh& mesh() const { return mesh_; }

private:
    TriangleMesh mesh_;
    MeshBvh bvh_;
    double total_area_ = 0.0;
    std::vector<double> cdf_;
};

class AnalyticOracle final : public Oracle {
public:
    explicit AnalyticOracle(const AnalyticShape& shape) : shape_(shape) {}

    HitRecord raycast(const OrientedPoint& op) const override {
        return analytic_ddf_eval(shape_, op);
    }
    bool has_surface() const override { return true; }
    SurfacePoint sample_surface(Rng& rng) const override {
        if (const auto* s = std::get_if<SphereShape>(&shape_.shape)) {
            UnitVec3 n = rng.unit_vector();
            return {s->center + n * s->radius, n};
        }
        if (const auto* pl = std::get_if<PlaneShape>(&shape_.shape)) {
            // uniform over the in-domain portion of the plane, by rejection
            auto [t1, t2] = plane_tangents(pl->normal);
            BoundingBox box;
            for (int tries = 0; tries < 100000; ++tries) {
                double a = rng.uniform(-2.0, 2.0);
                double b = rng.uniform(-2.0, 2.0);
                Vec3 q = pl->point + t1 * a + t2 * b;
                if (box.contains(q)) return {q, pl->normal};
            }
            throw std::runtime_error("plane does not intersect the domain box");
        }
        const auto& bx = std::get<BoxShape>(shape_.shape);
        Vec3 e = bx.max - bx.min;
        std::array<double, 3> face_area = {e.y * e.z, e.x * e.z, e.x * e.y};
        double total = 2.0 * (face_area[0] + face_area[1] + face_area[2]);
        double r = rng.uniform01() * total;
        for (int axis = 0; axis < 3; ++axis) {
            for (double side : {0.0, 1.0}) {
                r -= face_area[axis];
                if (r <= 0.0) {
                    Vec3 q;
                    q[axis] = side == 0.0 ? bx.min[axis] : bx.max[axis];
                    int u = (axis + 1) % 3, w = (axis + 2) % 3;
                    q[u] = rng.uniform(bx.min[u], bx.max[u]);
                    q[w] = rng.uniform(bx.min[w], bx.max[w]);
                    Vec3 n{};
                    n[axis] = side == 0.0 ? -1.0 : 1.0;
                    return {q, n};
                }
            }
        }
        throw std::logic_error("unreachable");
    }
    std::string describe() const override {
        if (const auto* s = std::get_if<SphereShape>(&shape_.shape))
            return "analytic:sphere r=" + std::to_string(s->radius);
        if (std::get_if<PlaneShape>(&shape_.shape)) return "analytic:plane";
        return "analytic:box";
    }
    const AnalyticShape& shape() const { return shape_; }

private:
    static std::pair<Vec3, Vec3> plane_tangents(const UnitVec3& n) {
        Vec3 axis = std::abs(n.x) <= std::abs(n.y) && std::abs(n.x) <= std::abs(n.z)
                        ? Vec3{1, 0, 0}
                        : (std::abs(n.y) <= std::abs(n.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
        Vec3 t1 = axis.cross(n).normalized();
        return {t1, n.cross(t1)};
    }

    AnalyticShape shape_;
};

// ---------------------------------------------------------------------------
// Sample construction

namespace detail {

inline void orient_normal(UnitVec3& n, const UnitVec3& v) {
    if (n.dot(v) > 0.0) n = -n;
}

inline TrainingSample label_by_cast(const Oracle& oracle, const OrientedPoint& op,
                                    SampleType kind) {
    TrainingSample s;
    s.op = op;
    s.kind = kind;
    HitRecord hit = oracle.raycast(op);
    if (hit.visible) {
        s.visible = true;
        s.depth = hit.depth;
        s.has_normal = true;
        s.normal = hit.normal;
        orient_normal(s.normal, op.v);
    }
    return s;
}

struct TangentConstruction {
    Vec3 q0;        // surface anchor
    UnitVec3 n0;    // surface normal at the anchor
    Vec3 p;         // constructed query position
    UnitVec3 v;     // view direction (looks back toward q0)
};

/// Shared A/T construction: pick a surface anchor, shoot a line through it,
/// place p between the anchor and the domain boundary, and look back.
inline TangentConstruction at_construction(const Oracle& oracle, bool tangent,
                                           Rng& rng) {
    const BoundingBox box;
    for (;;) {
        SurfacePoint sp = oracle.sample_surface(rng);
        if (!box.contains(sp.q)) continue;  // open meshes may poke outside
        UnitVec3 v0;
        if (tangent) {
            Vec3 g = rng.normal3();
            Vec3 t = g - sp.n * g.dot(sp.n);
            double len = t.norm();
            if (len < 1e-6) continue;
            v0 = t / len;
        } else {
            v0 = rng.unit_vector();
        }
        auto exit = ray_box_exit(sp.q, v0, box);
        if (!exit) continue;  // numerically on the boundary looking out
        double u = rng.uniform01();
        TangentConstruction c;
        c.q0 = sp.q;
        c.n0 = sp.n;
        c.p = sp.q + (*exit - sp.q) * u;
        c.v = -v0;
        return c;
    }
}

/// Label an A/T sample whose construction guarantees the line meets the
/// surface at q0. The recast result wins only when it found something
/// strictly nearer than the anchor; grazing recasts that rediscover q0 (or
/// miss it on faceted geometry) resolve to the exact construction values.
inline TrainingSample label_through_anchor(const Oracle& oracle,
                                           const TangentConstruction& c,
                                           const Vec3& p, SampleType kind) {
    TrainingSample s;
    s.op = {p, c.v};
    s.kind = kind;
    const double t_anchor = (c.q0 - p).norm();
    HitRecord hit = oracle.raycast(s.op);
    s.visible = true;
    s.has_normal = true;
    if (hit.visible && hit.depth < t_anchor - 1e-6) {
        s.depth = hit.depth;
        s.normal = hit.normal;
    } else {
        s.depth = t_anchor;
        s.normal = c.n0;
    }
    orient_normal(s.normal, s.op.v);
    return s;
}

}  // namespace detail

/// Draws n samples of one type, ground truth included. Deterministic given
/// the rng state; every sample type uses the oracle over the [-1,1]^3 domain.
inline std::vector<TrainingSample> draw_samples(const Oracle& oracle,
                                                SampleType kind, std::size_t n,
                                                const DatasetSpec& spec, Rng& rng) {
    const BoundingBox box;
    const bool needs_surface = kind == SampleType::A || kind == SampleType::S ||
                               kind == SampleType::T || kind == SampleType::O;
    if (needs_surface && !oracle.has_surface())
        throw std::runtime_error("sample type requires a surface but the oracle has none");

    std::vector<TrainingSample> out;
    out.reserve(n);
    while (out.size() < n) {
        switch (kind) {
            case SampleType::U: {
                out.push_back(detail::label_by_cast(
                    oracle, {rng.in_box(box), rng.unit_vector()}, kind));
                break;
            }
            case SampleType::B: {
                // position uniform over the box faces, direction into the interior
                int axis = rng.uniform_int(3);
                double side = rng.coin() ? 1.0 : -1.0;
                Vec3 p;
                p[axis] = side;
                p[(axis + 1) % 3] = rng.uniform(-1.0, 1.0);
                p[(axis + 2) % 3] = rng.uniform(-1.0, 1.0);
                UnitVec3 v = rng.unit_vector();
                double inward = -side * v[axis];
                if (inward == 0.0) continue;
                if (inward < 0.0) v = -v;
                out.push_back(detail::label_by_cast(oracle, {p, v}, kind));
                break;
            }
            case SampleType::S: {
                SurfacePoint sp = oracle.sample_surface(rng);
                if (!box.contains(sp.q)) continue;
                TrainingSample s;
                s.op = {sp.q, rng.unit_vector()};
                s.kind = kind;
                s.visible = true;  // the ray starts on the surface: t = 0 hit
                s.depth = 0.0;
                s.has_normal = true;
                s.normal = sp.n;
                detail::orient_normal(s.normal, s.op.v);
                out.push_back(s);
                break;
            }
            case SampleType::A:
            case SampleType::T: {
                auto c = detail::at_construction(oracle, kind == SampleType::T, rng);
                Vec3 p = c.p;
                if (rng.uniform01() < spec.boundary_bias) {
                    auto exit = ray_box_exit(p, -c.v, box);
                    if (!exit) continue;
                    p = *exit;
                }
                out.push_back(detail::label_through_anchor(oracle, c, p, kind));
                break;
            }
            case SampleType::O: {
                // Tangent construction offset by +-epsilon_O along the anchor
                // normal, so every unbiased sample sits exactly epsilon_O off
                // the surface.
                auto c = detail::at_construction(oracle, /*tangent=*/true, rng);
                double sigma = rng.coin() ? 1.0 : -1.0;
                Vec3 p = c.q0 + c.n0 * (sigma * spec.offset_epsilon);
                if (!box.contains(p)) continue;  // field domain is the box
                if (rng.uniform01() < spec.boundary_bias) {
                    auto exit = ray_box_exit(p, -c.v, box);
                    if (!exit) continue;
                    p = *exit;
                }
                // The offset moved p off the anchored line, so visibility is
                // genuinely open again; label by a fresh cast.
                out.push_back(detail::label_by_cast(oracle, {p, c.v}, kind));
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset file: magic "DDFD1\n", one JSON header line, then fixed-width
// little-endian records: 3xf32 p, 3xf32 v, u8 kind, u8 visible, f32 depth,
// 3xf32 normal (zeros when invisible).

inline constexpr char kDatasetMagic[] = "DDFD1\n";
inline constexpr std::size_t kDatasetRecordBytes = 42;

struct Dataset {
    DatasetSpec spec;
    std::string oracle_description;
    std::vector<TrainingSample> samples;  // grouped by type in U A B S T O order

    std::vector<const TrainingSample*> of_kind(SampleType t) const {
        std::vector<const TrainingSample*> out;
        for (const auto& s : samples)
            if (s.kind == t) out.push_back(&s);
        return out;
    }
};

namespace detail {

inline void put_f32(std::string& buf, float v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
}

inline void encode_record(std::string& buf, const TrainingSample& s) {
    put_f32(buf, static_cast<float>(s.op.p.x));
    put_f32(buf, static_cast<float>(s.op.p.y));
    put_f32(buf, static_cast<float>(s.op.p.z));
    put_f32(buf, static_cast<float>(s.op.v.x));
    put_f32(buf, static_cast<float>(s.op.v.y));
    put_f32(buf, static_cast<float>(s.op.v.z));
    buf.push_back(static_cast<char>(s.kind));
    buf.push_back(static_cast<char>(s.visible ? 1 : 0));
    put_f32(buf, s.visible ? static_cast<float>(s.depth) : 0.0f);
    Vec3 n = s.has_normal ? s.normal : Vec3{};
    put_f32(buf, static_cast<float>(n.x));
    put_f32(buf, static_cast<float>(n.y));
    put_f32(buf, static_cast<float>(n.z));
}

inline TrainingSample decode_record(const char* b) {
    auto f32 = [&](int off) {
        float v;
        std::memcpy(&v, b + off, 4);
        return static_cast<double>(v);
    };
    TrainingSample s;
    s.op.p = {f32(0), f32(4), f32(8)};
    s.op.v = {f32(12), f32(16), f32(20)};
    s.kind = static_cast<SampleType>(static_cast<std::uint8_t>(b[24]));
    s.visible = b[25] != 0;
    s.depth = f32(26);
    if (s.visible) {
        s.has_normal = true;
        s.normal = {f32(30), f32(34), f32(38)};
    }
    return s;
}

}  // namespace detail

/// Writes every sample type in spec order; deterministic given spec.seed
/// (each type draws from its own derived stream).
inline void build_dataset(const Oracle& oracle, const DatasetSpec& spec,
                          const std::string& path) {
    nlohmann::json header;
    nlohmann::json counts;
    for (SampleType t : kAllSampleTypes)
        counts[std::string(1, sample_type_letter(t))] = spec.count(t);
    header["counts"] = counts;
    header["epsilon_o"] = spec.offset_epsilon;
    header["boundary_bias"] = spec.boundary_bias;
    header["seed"] = spec.seed;
    header["oracle"] = oracle.describe();
    header["record_bytes"] = kDatasetRecordBytes;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open dataset for writing: " + path);
    out.write(kDatasetMagic, 6);
    out << header.dump() << '\n';
    std::string buf;
    for (SampleType t : kAllSampleTypes) {
        Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(t));
        auto samples = draw_samples(oracle, t, spec.count(t), spec, rng);
        buf.clear();
        buf.reserve(samples.size() * kDatasetRecordBytes);
        for (const auto& s : samples) detail::encode_record(buf, s);
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!out) throw std::runtime_error("dataset write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    char magic[6];
    in.read(magic, 6);
    if (in.gcount() != 6 || std::memcmp(magic, kDatasetMagic, 6) != 0)
        throw std::runtime_error("not a DDFD1 dataset: " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("truncated dataset header: " + path);
    nlohmann::json header = nlohmann::json::parse(header_line);

    Dataset ds;
    for (SampleType t : kAllSampleTypes)
        ds.spec.count(t) =
            header.at("counts").at(std::string(1, sample_type_letter(t))).get<std::size_t>();
    ds.spec.offset_epsilon = header.at("epsilon_o").get<double>();
    ds.spec.boundary_bias = header.at("boundary_bias").get<double>();
    ds.spec.seed = header.at("seed").get<std::uint64_t>();
    ds.oracle_description = header.value("oracle", "");

    const std::size_t total = ds.spec.total();
    ds.samples.reserve(total);
    std::vector<char> rec(kDatasetRecordBytes);
    for (std::size_t i = 0; i < total; ++i) {
        in.read(rec.data(), static_cast<std::streamsize>(rec.size()));
        if (in.gcount() != static_cast<std::streamsize>(rec.size()))
            throw std::runtime_error("dataset payload truncated: " + path);
        ds.samples.push_back(detail::decode_record(rec.data()));
    }
    return ds;
}

}  // namespace pddf
