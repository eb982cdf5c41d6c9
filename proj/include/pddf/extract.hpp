#pragma once

#include <algorithm>
#include <fstream>

#include "pddf/compose.hpp"
#include "pddf/trainer.hpp"

namespace pddf {

struct VStarConfig {
    int candidates = 5;  // K_c
    std::vector<int> hidden_sizes = {128, 128, 128, 128, 128};
    double omega0 = 1.0;
    double tau_n = 5e-3;
    double tau_d = 0.1;
    std::size_t iterations = 10000;
    double lr = 1e-4;
    std::size_t points_per_step = 4096;
    ComposeParams softmax;  // same weighting as explicit composition
    std::uint64_t seed = 0;
    int threads = 0;

    MlpShape mlp_shape() const {
        return MlpShape{3, hidden_sizes, 3 * candidates, omega0};
    }
};

/// Small direction network: position -> K_c unit candidate directions.
struct VStarModel {
    VStarConfig config;
    MlpWeights weights;

    std::vector<UnitVec3> candidates_at(const Vec3& p) const {
        SirenMlp<double> net(weights);
        SirenMlp<double>::Vec x(3);
        x << p.x, p.y, p.z;
        auto y = net.jet_single(x, {}, {});
        return decode_directions<double>(y.y, config.candidates);
    }

    template <typename Real>
    static std::vector<UnitVec3> decode_directions(
        const typename SirenMlp<Real>::Vec& y, int kc) {
        std::vector<UnitVec3> dirs;
        dirs.reserve(kc);
        for (int i = 0; i < kc; ++i) {
            Vec3 raw{static_cast<double>(y(3 * i)), static_cast<double>(y(3 * i + 1)),
                     static_cast<double>(y(3 * i + 2))};
            double n = raw.norm();
            dirs.push_back(n > 1e-12 ? raw / n : Vec3{0, 0, 1});
        }
        return dirs;
    }
};

namespace extractdetail {

/// What v* training needs from the frozen field at a batch of oriented
/// points: values plus view- and position-derivatives of the active depth
/// and of visibility.
struct FieldRows {
    std::vector<double> d, xi;
    std::vector<Vec3> grad_v_d, grad_v_xi;
    std::vector<Vec3> normal;  // zero when degenerate
    void resize(std::size_t n) {
        d.assign(n, 0.0);
        xi.assign(n, 0.0);
        grad_v_d.assign(n, Vec3{});
        grad_v_xi.assign(n, Vec3{});
        normal.assign(n, Vec3{});
    }
};

class FieldRowSource {
public:
    virtual ~FieldRowSource() = default;
    virtual void eval_rows(std::span<const OrientedPoint> ops, FieldRows& out) const = 0;
};

/// Batched row source over a trained PDDF (float engine: this is training
/// machinery for the direction net, matching the shape fit's precision).
class ModelRowSource final : public FieldRowSource {
public:
    explicit ModelRowSource(const PddfModel& model) : net_(model.weights) {}

    void eval_rows(std::span<const OrientedPoint> ops, FieldRows& out) const override {
        using Net = SirenMlp<float>;
        const std::size_t B = ops.size();
        out.resize(B);
        typename Net::Mat x(B, 6);
        std::vector<typename Net::Mat> tangents(5, Net::Mat::Zero(B, 6));
        std::vector<std::pair<Vec3, Vec3>> vt(B);
        for (std::size_t r = 0; r < B; ++r) {
            const Vec3 p = ops[r].p;
            const Vec3 v = ops[r].v.normalized();
            x(r, 0) = static_cast<float>(p.x);
            x(r, 1) = static_cast<float>(p.y);
            x(r, 2) = static_cast<float>(p.z);
            x(r, 3) = static_cast<float>(v.x);
            x(r, 4) = static_cast<float>(v.y);
            x(r, 5) = static_cast<float>(v.z);
            for (int k = 0; k < 3; ++k) tangents[k](r, k) = 1.0f;
            vt[r] = detail::deterministic_tangents(v);
            for (int k = 0; k < 3; ++k) {
                tangents[3](r, 3 + k) = static_cast<float>(vt[r].first[k]);
                tangents[4](r, 3 + k) = static_cast<float>(vt[r].second[k]);
            }
        }
        typename Net::Cache cache;
        net_.forward_jet(x, tangents, cache);
        for (std::size_t r = 0; r < B; ++r) {
            const double y0 = cache.y(r, headslot::kDepth0);
            const double y1 = cache.y(r, headslot::kDepth1);
            const double w1 = detail::sigmoid(cache.y(r, headslot::kWeightLogit));
            const double xiv = detail::sigmoid(cache.y(r, headslot::kXiLogit));
            const int istar = w1 >= 0.5 ? 0 : 1;
            const int slot = istar == 0 ? headslot::kDepth0 : headslot::kDepth1;
            const double rstar = (istar == 0 ? y0 : y1) > 0.0 ? 1.0 : 0.0;
            out.d[r] = std::max(0.0, istar == 0 ? y0 : y1);
            out.xi[r] = xiv;
            const double sx = xiv * (1.0 - xiv);
            Vec3 gvd = vt[r].first * (rstar * cache.v[3](r, slot)) +
                       vt[r].second * (rstar * cache.v[4](r, slot));
            Vec3 gvx = vt[r].first * (sx * cache.v[3](r, headslot::kXiLogit)) +
                       vt[r].second * (sx * cache.v[4](r, headslot::kXiLogit));
            out.grad_v_d[r] = gvd;
            out.grad_v_xi[r] = gvx;
            Vec3 gpd{rstar * cache.v[0](r, slot), rstar * cache.v[1](r, slot),
                     rstar * cache.v[2](r, slot)};
            double glen = gpd.norm();
            if (glen >= 1e-8) {
                Vec3 n = gpd / glen;
                const Vec3 v{x(r, 3), x(r, 4), x(r, 5)};
                if (n.dot(v) > 0.0) n = -n;
                out.normal[r] = n;
            }
        }
    }

private:
    SirenMlp<float> net_;
};

/// Row source over any jet-capable evaluator (oracles in tests).
class EvaluatorRowSource final : public FieldRowSource {
public:
    explicit EvaluatorRowSource(const FieldEvaluator& eval) : eval_(&eval) {}

    void eval_rows(std::span<const OrientedPoint> ops, FieldRows& out) const override {
        out.resize(ops.size());
        JetRequest want;
        want.v_grads = true;
        for (std::size_t r = 0; r < ops.size(); ++r) {
            FieldJet jet = eval_->evaluate_jet(ops[r], want);
            out.d[r] = jet.out.depth();
            out.xi[r] = jet.out.xi;
            out.grad_v_d[r] = jet.grad_v_d[static_cast<std::size_t>(jet.out.i_star)];
            out.grad_v_xi[r] = Vec3{};  // oracle visibility is locally constant
            auto n = surface_normal_estimate(jet, ops[r].v);
            if (n) out.normal[r] = *n;
        }
    }

private:
    const FieldEvaluator* eval_;
};

}  // namespace extractdetail

/// Trains the candidate-direction network against a frozen field by Adam on
/// fresh uniform positions: minimize depth, reward visibility, spread the
/// candidates, align them against the local surface normal.
inline VStarModel fit_vstar(const extractdetail::FieldRowSource& field,
                            const VStarConfig& config) {
    using Real = float;
    using Net = SirenMlp<Real>;
    if (config.candidates < 2) throw std::invalid_argument("v* needs at least two candidates");

    VStarModel model;
    model.config = config;
    model.weights = init_siren_weights(config.mlp_shape(), config.seed);
    Net net(model.weights);
    Adam<Real> adam(net);
    const int threads = config.threads > 0 ? config.threads : hardware_threads();
    const int kc = config.candidates;
    Rng rng = Rng::derive(config.seed, 0x57A12ULL);
    const BoundingBox box;
    const std::size_t kChunk = 256;

    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        std::vector<Vec3> points(config.points_per_step);
        for (auto& p : points) p = rng.in_box(box);

        const std::size_t nchunks = (points.size() + kChunk - 1) / kChunk;
        std::vector<typename Net::Grads> grads(nchunks);
        std::vector<double> losses(nchunks, 0.0);

        parallel_chunks(points.size(), kChunk, threads, [&](std::size_t c, std::size_t b, std::size_t e) {
            const std::size_t B = e - b;
            grads[c].init_like(net);
            typename Net::Mat x(B, 3);
            for (std::size_t r = 0; r < B; ++r) {
                x(r, 0) = static_cast<Real>(points[b + r].x);
                x(r, 1) = static_cast<Real>(points[b + r].y);
                x(r, 2) = static_cast<Real>(points[b + r].z);
            }
            typename Net::Cache cache;
            net.forward_jet(x, {}, cache);

            // decode candidates and query the frozen field
            std::vector<OrientedPoint> ops(B * kc);
            std::vector<std::array<Vec3, 2>> decode;  // raw and unit per slot
            decode.resize(B * kc);
            for (std::size_t r = 0; r < B; ++r)
                for (int i = 0; i < kc; ++i) {
                    Vec3 raw{static_cast<double>(cache.y(r, 3 * i)),
                             static_cast<double>(cache.y(r, 3 * i + 1)),
                             static_cast<double>(cache.y(r, 3 * i + 2))};
                    double n = raw.norm();
                    Vec3 unit = n > 1e-9 ? raw / n : Vec3{0, 0, 1};
                    decode[r * kc + i] = {raw, unit};
                    ops[r * kc + i] = {points[b + r], unit};
                }
            extractdetail::FieldRows rows;
            field.eval_rows(ops, rows);

            typename Net::Mat y_bar = Net::Mat::Zero(B, 3 * kc);
            const double w_spread = 2.0 * config.tau_n / (kc * kc - kc);
            const double inv_b = 1.0 / static_cast<double>(points.size());
            for (std::size_t r = 0; r < B; ++r) {
                double loss = 0.0;
                for (int i = 0; i < kc; ++i) {
                    const std::size_t idx = r * kc + i;
                    const Vec3& raw = decode[idx][0];
                    const Vec3& vi = decode[idx][1];
                    Vec3 dl{};

                    loss += (rows.d[idx] - rows.xi[idx]) / kc;
                    dl += (rows.grad_v_d[idx] - rows.grad_v_xi[idx]) / kc;

                    Vec3 others{};
                    for (int j = 0; j < kc; ++j)
                        if (j != i) {
                            others += decode[r * kc + j][1];
                            loss += w_spread * vi.dot(decode[r * kc + j][1]);
                        }
                    // v_i appears in both orderings of each pair
                    dl += others * (2.0 * w_spread);

                    const Vec3& n = rows.normal[idx];
                    if (n.squared_norm() > 0.0) {
                        const double align = vi.dot(n) + 1.0;
                        loss += config.tau_d / kc * align * align;
                        dl += n * (config.tau_d / kc * 2.0 * align);
                    }

                    // through the normalization: dL/draw = (I - v v^T) dl / |raw|
                    double rn = raw.norm();
                    if (rn > 1e-9) {
                        Vec3 draw = (dl - vi * dl.dot(vi)) / rn;
                        for (int c2 = 0; c2 < 3; ++c2)
                            y_bar(r, 3 * i + c2) = static_cast<Real>(draw[c2] * inv_b);
                    }
                }
                losses[c] += loss * inv_b;
            }
            net.backward(cache, y_bar, {}, grads[c]);
        });

        for (std::size_t c = 1; c < nchunks; ++c) {
            grads[0].add(grads[c]);
            losses[0] += losses[c];
        }
        if (!std::isfinite(losses[0]))
            throw std::runtime_error("non-finite v* loss at iteration " + std::to_string(iter));
        if (nchunks) adam.step(net, grads[0], config.lr, 0.9, 0.999, 1e-8, iter + 1);
    }
    model.weights = net.export_weights();
    return model;
}

inline VStarModel fit_vstar(const PddfModel& field, const VStarConfig& config) {
    extractdetail::ModelRowSource rows(field);
    return fit_vstar(rows, config);
}
inline VStarModel fit_vstar(const FieldEvaluator& field, const VStarConfig& config) {
    extractdetail::EvaluatorRowSource rows(field);
    return fit_vstar(rows, config);
}

struct UdfResult {
    double udf = 0.0;
    UnitVec3 v_star{0, 0, 1};
    bool confident = false;  // false when no candidate direction is visible
};

/// Softmax-weighted candidate depths, weights as in explicit composition;
/// v* is the renormalized weighted average direction.
inline UdfResult udf_query(const FieldEvaluator& field, const VStarModel& vstar,
                           const Vec3& p) {
    auto dirs = vstar.candidates_at(p);
    const ComposeParams& cp = vstar.config.softmax;
    std::vector<OrientedPoint> ops;
    ops.reserve(dirs.size());
    for (const auto& v : dirs) ops.push_back({p, v});
    std::vector<FieldOutput> outs(ops.size());
    field.evaluate_many(ops, outs);

    double max_score = -kInf, max_xi = 0.0;
    std::vector<double> scores(outs.size());
    for (std::size_t i = 0; i < outs.size(); ++i) {
        scores[i] = outs[i].xi / (cp.eta_t * (cp.epsilon_s + outs[i].depth()));
        max_score = std::max(max_score, scores[i]);
        max_xi = std::max(max_xi, outs[i].xi);
    }
    double z = 0.0;
    for (double& s : scores) {
        s = std::exp(s - max_score);
        z += s;
    }
    UdfResult res;
    Vec3 vavg{};
    for (std::size_t i = 0; i < outs.size(); ++i) {
        const double w = scores[i] / z;
        res.udf += w * outs[i].depth();
        vavg += dirs[i] * w;
    }
    double n = vavg.norm();
    res.v_star = n > 1e-9 ? vavg / n : dirs[0];
    res.confident = max_xi >= 0.5;
    return res;
}

struct PointCloudConfig {
    std::size_t n_points = 2048;  // n_p
    int n_dirs = 128;             // n_v
    int hops = 3;                 // N_H
    double oversample = 0.1;      // epsilon_p
    ComposeParams softmax;
    std::uint64_t seed = 0;
    int threads = 0;
};

/// Explicit sampling: project uniform seeds onto the shape by the softly
/// selected best visible direction, re-projecting hops times, then keep the
/// n_p most visible points.
inline std::vector<Vec3> sample_point_cloud(const FieldEvaluator& field,
                                            const PointCloudConfig& config) {
    if (config.n_points < 1) throw std::invalid_argument("n_points must be >= 1");
    const std::size_t n_seed = static_cast<std::size_t>(
        std::ceil((1.0 + config.oversample) * static_cast<double>(config.n_points)));
    const int threads = config.threads > 0 ? config.threads : hardware_threads();
    const BoundingBox box;

    struct Candidate {
        Vec3 q;
        double xi;
        std::size_t idx;
    };
    std::vector<Candidate> candidates(n_seed);

    parallel_chunks(n_seed, 64, threads, [&](std::size_t, std::size_t bgn, std::size_t end) {
        std::vector<OrientedPoint> ops(config.n_dirs);
        std::vector<FieldOutput> outs(config.n_dirs);
        for (std::size_t i = bgn; i < end; ++i) {
            Rng rng = Rng::derive(config.seed, 0x9C0000ULL + i);
            Vec3 p = rng.in_box(box);
            double xi_last = 0.0;
            for (int hop = 0; hop < config.hops; ++hop) {
                Vec3 vavg{};
                for (;;) {
                    for (int k = 0; k < config.n_dirs; ++k) ops[k] = {p, rng.unit_vector()};
                    field.evaluate_many(ops, outs);
                    double max_score = -kInf;
                    std::vector<double> scores(outs.size());
                    for (std::size_t k = 0; k < outs.size(); ++k) {
                        scores[k] = outs[k].xi / (config.softmax.eta_t *
                                                  (config.softmax.epsilon_s + outs[k].depth()));
                        max_score = std::max(max_score, scores[k]);
                    }
                    double z = 0.0;
                    for (double& s : scores) {
                        s = std::exp(s - max_score);
                        z += s;
                    }
                    vavg = Vec3{};
                    for (std::size_t k = 0; k < outs.size(); ++k)
                        vavg += ops[k].v * (scores[k] / z);
                    if (vavg.norm() > 1e-9) break;
                    // antipodal cancellation: draw a fresh direction set
                }
                UnitVec3 vstar = vavg.normalized();
                FieldOutput chosen = field.evaluate({p, vstar});
                xi_last = chosen.xi;
                p = p + vstar * chosen.depth();
            }
            candidates[i] = {p, xi_last, i};
        }
    });

    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.xi != b.xi) return a.xi > b.xi;
        return a.idx < b.idx;
    });
    std::vector<Vec3> out;
    out.reserve(config.n_points);
    for (std::size_t i = 0; i < config.n_points && i < candidates.size(); ++i)
        out.push_back(candidates[i].q);
    return out;
}

// ---------------------------------------------------------------------------
// Point-cloud metrics

struct ChamferFScore {
    double chamfer = 0.0;  // D_C x 1000 (sum of mean squared nearest distances)
    double f_tau = 0.0;    // F-score x 100 at squared-distance threshold tau
    double f_2tau = 0.0;
};

namespace extractdetail {

inline double d2(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

inline std::vector<double> nearest_sq_brute(const std::vector<Vec3>& from,
                                            const std::vector<Vec3>& to) {
    std::vector<double> out(from.size(), kInf);
    for (std::size_t i = 0; i < from.size(); ++i)
        for (const auto& b : to) out[i] = std::min(out[i], d2(from[i], b));
    return out;
}

/// Uniform-grid nearest neighbour; exact (expanding ring search with a
/// distance bound), so the minima match the brute-force path bit for bit.
class PointGrid {
public:
    explicit PointGrid(const std::vector<Vec3>& pts) : pts_(&pts) {
        lo_ = Vec3{kInf, kInf, kInf};
        Vec3 hi{-kInf, -kInf, -kInf};
        for (const auto& p : pts) {
            lo_ = lo_.cwise_min(p);
            hi = hi.cwise_max(p);
        }
        const double n3 = std::cbrt(static_cast<double>(std::max<std::size_t>(pts.size(), 1)));
        dims_ = std::max(1, static_cast<int>(n3));
        Vec3 extent = hi - lo_;
        cell_ = std::max({extent.x, extent.y, extent.z, 1e-12}) / dims_;
        cells_.assign(static_cast<std::size_t>(dims_) * dims_ * dims_, {});
        for (std::size_t i = 0; i < pts.size(); ++i)
            cells_[cell_index(pts[i])].push_back(static_cast<std::uint32_t>(i));
    }

    double nearest_sq(const Vec3& q) const {
        int cx, cy, cz;
        cell_coords(q, cx, cy, cz);
        double best = kInf;
        for (int ring = 0; ring < dims_; ++ring) {
            // Any point in a ring-r cell is at least (r-1) full cells away
            // from the query's (clamped) cell, and clamping only shrinks
            // distances, so this lower bound is valid for queries outside
            // the grid too.
            if (ring > 0) {
                const double gap = (ring - 1) * cell_;
                if (gap * gap > best) break;
            }
            for (int dz = -ring; dz <= ring; ++dz)
                for (int dy = -ring; dy <= ring; ++dy)
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                            continue;
                        int x = cx + dx, y = cy + dy, z = cz + dz;
                        if (x < 0 || y < 0 || z < 0 || x >= dims_ || y >= dims_ || z >= dims_)
                            continue;
                        for (std::uint32_t i : cells_[(static_cast<std::size_t>(z) * dims_ + y) * dims_ + x])
                            best = std::min(best, d2(q, (*pts_)[i]));
                    }
        }
        return best;
    }

private:
    std::size_t cell_index(const Vec3& p) const {
        int x, y, z;
        cell_coords(p, x, y, z);
        return (static_cast<std::size_t>(z) * dims_ + y) * dims_ + x;
    }
    void cell_coords(const Vec3& p, int& x, int& y, int& z) const {
        x = std::clamp(static_cast<int>((p.x - lo_.x) / cell_), 0, dims_ - 1);
        y = std::clamp(static_cast<int>((p.y - lo_.y) / cell_), 0, dims_ - 1);
        z = std::clamp(static_cast<int>((p.z - lo_.z) / cell_), 0, dims_ - 1);
    }

    const std::vector<Vec3>* pts_;
    Vec3 lo_;
    double cell_ = 1.0;
    int dims_ = 1;
    std::vector<std::vector<std::uint32_t>> cells_;
};

inline std::vector<double> nearest_sq_indexed(const std::vector<Vec3>& from,
                                              const std::vector<Vec3>& to) {
    PointGrid grid(to);
    std::vector<double> out(from.size());
    for (std::size_t i = 0; i < from.size(); ++i) out[i] = grid.nearest_sq(from[i]);
    return out;
}

}  // namespace extractdetail

/// Chamfer distance (x1000, squared-distance convention) and F-scores (x100)
/// at inclusive squared-distance thresholds tau and 2*tau.
inline ChamferFScore chamfer_f_score(const std::vector<Vec3>& a,
                                     const std::vector<Vec3>& b, double tau = 1e-4,
                                     bool use_index = true) {
    if (a.empty() || b.empty()) throw std::invalid_argument("point sets must be non-empty");
    auto da = use_index ? extractdetail::nearest_sq_indexed(a, b)
                        : extractdetail::nearest_sq_brute(a, b);
    auto db = use_index ? extractdetail::nearest_sq_indexed(b, a)
                        : extractdetail::nearest_sq_brute(b, a);
    double sum_a = 0.0, sum_b = 0.0;
    for (double d : da) sum_a += d;
    for (double d : db) sum_b += d;

    auto fscore = [&](double threshold) {
        std::size_t hit_a = 0, hit_b = 0;
        for (double d : da) hit_a += d <= threshold ? 1 : 0;
        for (double d : db) hit_b += d <= threshold ? 1 : 0;
        const double precision = static_cast<double>(hit_a) / a.size();
        const double recall = static_cast<double>(hit_b) / b.size();
        if (precision + recall == 0.0) return 0.0;
        return 100.0 * 2.0 * precision * recall / (precision + recall);
    };

    ChamferFScore out;
    out.chamfer = 1000.0 * (sum_a / a.size() + sum_b / b.size());
    out.f_tau = fscore(tau);
    out.f_2tau = fscore(2.0 * tau);
    return out;
}

// ---------------------------------------------------------------------------
// XYZ files: one "x y z" line per point.

inline void write_xyz(const std::vector<Vec3>& pts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open XYZ for writing: " + path);
    char line[96];
    for (const auto& p : pts) {
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
        out << line;
    }
    if (!out) throw std::runtime_error("XYZ write failed: " + path);
}

inline std::vector<Vec3> read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open XYZ: " + path);
    std::vector<Vec3> pts;
    Vec3 p;
    while (in >> p.x >> p.y >> p.z) pts.push_back(p);
    return pts;
}

}  // namespace pddf
