#pragma once

#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "pddf/evaluator.hpp"
#include "pddf/mlp.hpp"

namespace pddf {

struct SirenConfig {
    int input_dim = 6;
    std::vector<int> hidden_sizes = {512, 512, 512, 512, 512, 512, 512};
    double omega0 = 1.0;
    int K = 2;
    std::uint64_t seed = 0;

    int output_dim() const { return 2 * K + 1; }
    MlpShape mlp_shape() const {
        return MlpShape{input_dim, hidden_sizes, output_dim(), omega0};
    }
    bool operator==(const SirenConfig&) const = default;
};

/// The probabilistic directed distance field: parameters plus the output-head
/// convention. The head is 2K+1 = 5 wide: two rectified depths, one weight
/// logit (the second mixture weight is 1 - w1, so its slot is unused), and a
/// visibility logit.
struct PddfModel {
    SirenConfig config;
    MlpWeights weights;
    nlohmann::json meta;  // training provenance, free-form
};

inline PddfModel init_siren(const SirenConfig& config, std::uint64_t seed) {
    if (config.K != 2) throw std::invalid_argument("this field supports K = 2 only");
    PddfModel m;
    m.config = config;
    m.config.seed = seed;
    m.weights = init_siren_weights(config.mlp_shape(), seed);
    return m;
}

namespace headslot {
// Output-head slot assignment (width 2K+1 = 5 for K = 2).
constexpr int kDepth0 = 0;
constexpr int kDepth1 = 1;
constexpr int kWeightLogit = 2;
constexpr int kSpare = 3;  // unused weight slot: w2 = 1 - w1
constexpr int kXiLogit = 4;
}  // namespace headslot

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// Deterministic orthonormal tangent pair for a unit direction; used for the
/// projected view-direction derivatives.
inline std::pair<Vec3, Vec3> deterministic_tangents(const UnitVec3& v) {
    Vec3 axis = std::abs(v.x) <= std::abs(v.y) && std::abs(v.x) <= std::abs(v.z)
                    ? Vec3{1, 0, 0}
                    : (std::abs(v.y) <= std::abs(v.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
    Vec3 t1 = axis.cross(v).normalized();
    Vec3 t2 = v.cross(t1);
    return {t1, t2};
}

}  // namespace detail

/// Inference facade over a PDDF model. Evaluation is pure; one Field can be
/// shared by any number of reader threads.
template <typename Real = double>
class FieldProgram {
public:
    using Net = SirenMlp<Real>;
    using Vec = typename Net::Vec;

    explicit FieldProgram(const PddfModel& model)
        : config_(model.config), net_(model.weights) {}

    const SirenConfig& config() const { return config_; }
    const Net& net() const { return net_; }

    FieldOutput eval(const OrientedPoint& op) const {
        Vec x = pack_input(op);
        auto y = net_.jet_single(x, {}, {});
        return map_output(y.y);
    }

    void eval_many(std::span<const OrientedPoint> ops,
                   std::span<FieldOutput> out) const {
        typename Net::Mat x(ops.size(), 6);
        for (std::size_t r = 0; r < ops.size(); ++r) {
            Vec row = pack_input(ops[r]);
            for (int c = 0; c < 6; ++c) x(static_cast<Eigen::Index>(r), c) = row(c);
        }
        typename Net::Mat y = net_.forward(x);
        for (std::size_t r = 0; r < ops.size(); ++r)
            out[r] = map_output(y.row(static_cast<Eigen::Index>(r)).transpose());
    }

    FieldJet eval_jet(const OrientedPoint& op, const JetRequest& want) const {
        Vec x = pack_input(op);
        UnitVec3 vn{static_cast<double>(x(3)), static_cast<double>(x(4)),
                    static_cast<double>(x(5))};

        std::vector<Vec> tangents;
        auto p_tangent = [&](const Vec3& t) {
            Vec s = Vec::Zero(6);
            s(0) = static_cast<Real>(t.x);
            s(1) = static_cast<Real>(t.y);
            s(2) = static_cast<Real>(t.z);
            return s;
        };
        tangents.push_back(p_tangent({1, 0, 0}));
        tangents.push_back(p_tangent({0, 1, 0}));
        tangents.push_back(p_tangent({0, 0, 1}));

        std::pair<Vec3, Vec3> vt;
        if (want.v_grads) {
            vt = detail::deterministic_tangents(vn);
            for (const Vec3& t : {vt.first, vt.second}) {
                Vec s = Vec::Zero(6);
                s(3) = static_cast<Real>(t.x);
                s(4) = static_cast<Real>(t.y);
                s(5) = static_cast<Real>(t.z);
                tangents.push_back(s);
            }
        }

        // Second-order streams reference first-order ones; reuse on identical
        // seeds (e.g. both orderings of a tangent-basis pair).
        auto find_or_add = [&](const Vec3& t) {
            Vec s = p_tangent(t);
            for (std::size_t i = 0; i < tangents.size(); ++i)
                if (tangents[i] == s) return static_cast<int>(i);
            tangents.push_back(s);
            return static_cast<int>(tangents.size() - 1);
        };
        std::vector<std::pair<int, int>> pairs;
        pairs.reserve(want.second_pairs.size());
        for (const auto& [ti, tj] : want.second_pairs)
            pairs.emplace_back(find_or_add(ti), find_or_add(tj));

        auto sj = net_.jet_single(x, tangents, pairs);

        FieldJet jet;
        jet.out = map_output(sj.y);
        const double d0p = sj.y(headslot::kDepth0) > Real(0) ? 1.0 : 0.0;
        const double d1p = sj.y(headslot::kDepth1) > Real(0) ? 1.0 : 0.0;
        const double sw = jet.out.w1 * (1.0 - jet.out.w1);
        const double sx = jet.out.xi * (1.0 - jet.out.xi);
        for (int k = 0; k < 3; ++k) {
            jet.grad_p_d[0][k] = d0p * static_cast<double>(sj.dy[k](headslot::kDepth0));
            jet.grad_p_d[1][k] = d1p * static_cast<double>(sj.dy[k](headslot::kDepth1));
            jet.grad_p_w1[k] = sw * static_cast<double>(sj.dy[k](headslot::kWeightLogit));
            jet.grad_p_xi[k] = sx * static_cast<double>(sj.dy[k](headslot::kXiLogit));
        }
        if (want.v_grads) {
            jet.has_v_grads = true;
            for (int i = 0; i < 2; ++i) {
                const double rp = i == 0 ? d0p : d1p;
                const int slot = i == 0 ? headslot::kDepth0 : headslot::kDepth1;
                jet.grad_v_d[i] = vt.first * (rp * static_cast<double>(sj.dy[3](slot))) +
                                  vt.second * (rp * static_cast<double>(sj.dy[4](slot)));
            }
        }
        const int astar = jet.out.i_star == 0 ? headslot::kDepth0 : headslot::kDepth1;
        const double rp_star = sj.y(astar) > Real(0) ? 1.0 : 0.0;
        jet.second.reserve(pairs.size());
        for (std::size_t q = 0; q < pairs.size(); ++q)
            jet.second.push_back(rp_star * static_cast<double>(sj.d2y[q](astar)));
        return jet;
    }

    static FieldOutput map_output(const Vec& y) {
        FieldOutput out;
        out.d[0] = std::max(0.0, static_cast<double>(y(headslot::kDepth0)));
        out.d[1] = std::max(0.0, static_cast<double>(y(headslot::kDepth1)));
        out.w1 = detail::sigmoid(static_cast<double>(y(headslot::kWeightLogit)));
        out.xi = detail::sigmoid(static_cast<double>(y(headslot::kXiLogit)));
        out.i_star = out.w1 >= 0.5 ? 0 : 1;  // tie picks the first component
        return out;
    }

    Vec pack_input(const OrientedPoint& op) const {
        if (!op.p.all_finite() || !op.v.all_finite())
            throw std::invalid_argument("non-finite field query");
        double n = op.v.norm();
        if (n == 0.0) throw std::invalid_argument("zero view direction");
        Vec x(6);
        x(0) = static_cast<Real>(op.p.x);
        x(1) = static_cast<Real>(op.p.y);
        x(2) = static_cast<Real>(op.p.z);
        x(3) = static_cast<Real>(op.v.x / n);
        x(4) = static_cast<Real>(op.v.y / n);
        x(5) = static_cast<Real>(op.v.z / n);
        return x;
    }

private:
    SirenConfig config_;
    Net net_;
};

using Field = FieldProgram<double>;

inline FieldOutput field_eval(const PddfModel& model, const OrientedPoint& op) {
    return Field(model).eval(op);
}

/// Field normal via the position gradient of the active depth. Near
/// silhouettes the gradient vanishes and the normal is undefined.
inline std::optional<UnitVec3> surface_normal_estimate(const FieldJet& jet,
                                                       const UnitVec3& v) {
    const Vec3& g = jet.grad_p_d[static_cast<std::size_t>(jet.out.i_star)];
    double len = g.norm();
    if (len < 1e-8) return std::nullopt;
    Vec3 n = g / len;
    if (n.dot(v) > 0.0) n = -n;
    return n;
}

struct Curvatures {
    double mean = 0.0;      // C_H, trace convention (no 1/2), convex side positive
    double gaussian = 0.0;  // C_K
};

/// Curvatures from second directional derivatives over a tangent basis.
/// `jet.second` must hold the pairs (tx,tx), (tx,ty), (ty,tx), (ty,ty).
/// The shape tensor is scaled by |n.v| with the sign chosen so a sphere seen
/// from outside has positive mean curvature.
inline std::optional<Curvatures> curvature_at(const FieldJet& jet,
                                              const UnitVec3& n,
                                              const UnitVec3& v) {
    if (jet.second.size() != 4) throw std::invalid_argument("curvature_at needs 4 second-order pairs");
    const double nv = n.dot(v);
    if (std::abs(nv) < 1e-8) return std::nullopt;
    const double f = -nv;  // n.v < 0 by convention, so this is |n.v|
    const double ii_xx = jet.second[0] * f;
    const double ii_xy = jet.second[1] * f;
    const double ii_yx = jet.second[2] * f;
    const double ii_yy = jet.second[3] * f;
    // Metric tensor taken as identity (tangents orthonormal).
    return Curvatures{ii_xx + ii_yy, ii_xx * ii_yy - ii_xy * ii_yx};
}

/// Learned field exposed through the shared evaluator interface.
class ModelEvaluator final : public FieldEvaluator {
public:
    explicit ModelEvaluator(const PddfModel& model) : field_(model) {}
    explicit ModelEvaluator(Field field) : field_(std::move(field)) {}

    bool supports_jets() const override { return true; }
    const Field& field() const { return field_; }

protected:
    FieldOutput eval(const OrientedPoint& op) const override { return field_.eval(op); }
    FieldJet jet(const OrientedPoint& op, const JetRequest& want) const override {
        return field_.eval_jet(op, want);
    }
    void eval_many(std::span<const OrientedPoint> ops,
                   std::span<FieldOutput> out) const override {
        field_.eval_many(ops, out);
    }

private:
    Field field_;
};

// ---------------------------------------------------------------------------
// Checkpoint format: magic "DDFM1\n", one JSON header line, then all
// parameters as little-endian f32 in layer order, weights row-major then bias.

inline constexpr char kModelMagic[] = "DDFM1\n";

inline void save_model(const PddfModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kModelMagic, 6);
    nlohmann::json header;
    header["config"] = {{"input_dim", model.config.input_dim},
                        {"hidden_sizes", model.config.hidden_sizes},
                        {"omega0", model.config.omega0},
                        {"K", model.config.K},
                        {"seed", model.config.seed}};
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& l : model.weights.layers) shapes.push_back({l.rows, l.cols});
    header["layers"] = shapes;
    header["meta"] = model.meta;
    std::string h = header.dump();
    out << h << '\n';
    for (const auto& l : model.weights.layers) {
        out.write(reinterpret_cast<const char*>(l.w.data()),
                  static_cast<std::streamsize>(l.w.size() * sizeof(float)));
        out.write(reinterpret_cast<const char*>(l.b.data()),
                  static_cast<std::streamsize>(l.b.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline PddfModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[6];
    in.read(magic, 6);
    if (in.gcount() != 6 || std::memcmp(magic, kModelMagic, 6) != 0)
        throw std::runtime_error("not a DDFM1 checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(header_line);

    PddfModel model;
    model.config.input_dim = header.at("config").at("input_dim").get<int>();
    model.config.hidden_sizes = header.at("config").at("hidden_sizes").get<std::vector<int>>();
    model.config.omega0 = header.at("config").at("omega0").get<double>();
    model.config.K = header.at("config").at("K").get<int>();
    model.config.seed = header.at("config").at("seed").get<std::uint64_t>();
    model.meta = header.value("meta", nlohmann::json::object());

    model.weights.shape = model.config.mlp_shape();
    auto shapes = header.at("layers");
    MlpShape expect = model.config.mlp_shape();
    std::vector<int> outs = expect.hidden;
    outs.push_back(expect.output_dim);
    if (shapes.size() != outs.size())
        throw std::runtime_error("checkpoint layer count does not match its config");
    int fan_in = expect.input_dim;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        MlpWeights::Layer layer;
        layer.rows = shapes[l][0].get<int>();
        layer.cols = shapes[l][1].get<int>();
        if (layer.rows != outs[l] || layer.cols != fan_in)
            throw std::runtime_error("checkpoint layer shape does not match its config");
        layer.w.resize(static_cast<std::size_t>(layer.rows) * layer.cols);
        layer.b.resize(layer.rows);
        in.read(reinterpret_cast<char*>(layer.w.data()),
                static_cast<std::streamsize>(layer.w.size() * sizeof(float)));
        in.read(reinterpret_cast<char*>(layer.b.data()),
                static_cast<std::streamsize>(layer.b.size() * sizeof(float)));
        if (!in) throw std::runtime_error("checkpoint payload truncated: " + path);
        fan_in = layer.rows;
        model.weights.layers.push_back(std::move(layer));
    }
    char extra;
    if (in.read(&extra, 1))
        throw std::runtime_error("checkpoint has trailing bytes: " + path);
    return model;
}

}  // namespace pddf
