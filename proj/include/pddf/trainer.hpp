#pragma once

#include <fstream>
#include <functional>
#include <numeric>

#include "pddf/losses.hpp"
#include "pddf/parallel.hpp"

namespace pddf {

struct TrainConfig {
    std::size_t iterations = 100000;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    double plateau_factor = 0.9;
    std::size_t plateau_min_gap = 5000;   // minimum iterations between reductions
    std::size_t plateau_patience = 2000;  // no new EMA minimum for this long
    double plateau_ema_alpha = 0.01;

    // minibatch counts per sample type, plus regularization-only points
    std::array<std::size_t, 6> batch_counts = {6000, 6000, 3000,
                                               3000, 3000, 3000};  // U A B S T O
    std::size_t batch_reg = 1000;

    LossWeights weights;
    std::uint64_t seed = 0;
    double scale = 1.0;  // uniformly scales iterations and batch counts

    std::size_t report_interval = 500;
    std::size_t heldout_per_type = 2000;
    int threads = 0;  // 0: all cores
    std::string checkpoint_path;  // written every 10% and at the end when set
    std::string log_path;         // JSONL metrics stream when set

    std::size_t batch_count(SampleType t) const { return batch_counts[static_cast<int>(t)]; }

    TrainConfig scaled() const {
        TrainConfig c = *this;
        if (scale != 1.0) {
            c.iterations = static_cast<std::size_t>(std::llround(iterations * scale));
            for (auto& n : c.batch_counts)
                n = static_cast<std::size_t>(std::llround(n * scale));
            c.batch_reg = static_cast<std::size_t>(std::llround(batch_reg * scale));
            c.scale = 1.0;
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Adam

template <typename Real>
class Adam {
public:
    using Net = SirenMlp<Real>;

    explicit Adam(const Net& net) {
        m_.init_like(net);
        v_.init_like(net);
    }

    /// Textbook update with bias correction. Throws on non-finite gradients.
    void step(Net& net, const typename Net::Grads& grads, double lr, double beta1,
              double beta2, double eps, std::size_t t) {
        if (!grads.all_finite())
            throw std::runtime_error("non-finite gradient at iteration " + std::to_string(t));
        const Real b1 = static_cast<Real>(beta1), b2 = static_cast<Real>(beta2);
        const Real corr1 = static_cast<Real>(1.0 - std::pow(beta1, static_cast<double>(t)));
        const Real corr2 = static_cast<Real>(1.0 - std::pow(beta2, static_cast<double>(t)));
        const Real a = static_cast<Real>(lr), e = static_cast<Real>(eps);
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            auto upd = [&](auto& x, const auto& g, auto& m, auto& v) {
                m = (b1 * m.array() + (Real(1) - b1) * g.array()).matrix();
                v = (b2 * v.array() + (Real(1) - b2) * g.array().square()).matrix();
                x.array() -= a * (m.array() / corr1) /
                             ((v.array() / corr2).sqrt() + e);
            };
            upd(net.layers()[l].w, grads.layers[l].w, m_.layers[l].w, v_.layers[l].w);
            upd(net.layers()[l].b, grads.layers[l].b, m_.layers[l].b, v_.layers[l].b);
        }
    }

private:
    typename Net::Grads m_, v_;
};

// ---------------------------------------------------------------------------
// Reports

struct TypeMetrics {
    double depth_l1 = 0.0;     // mean |d_hat - d| over visible samples
    double visibility_bce = 0.0;
    std::size_t n = 0, n_visible = 0;
};

struct HeldOutMetrics {
    std::array<TypeMetrics, 6> per_type;  // U A B S T O
    TypeMetrics& of(SampleType t) { return per_type[static_cast<int>(t)]; }
    const TypeMetrics& of(SampleType t) const { return per_type[static_cast<int>(t)]; }
};

struct TrainReport {
    struct Entry {
        std::size_t iter;
        double lr;
        LossBreakdown losses;
    };
    std::vector<Entry> history;
    bool has_metrics = false;
    HeldOutMetrics metrics;
};

/// Held-out evaluation: fresh oracle-labelled samples of every type.
template <typename Real = float>
HeldOutMetrics evaluate_held_out(const PddfModel& model, const Oracle& oracle,
                                 const DatasetSpec& spec, std::size_t per_type,
                                 std::uint64_t seed) {
    FieldProgram<Real> field(model);
    HeldOutMetrics out;
    for (SampleType t : kAllSampleTypes) {
        Rng rng = Rng::derive(seed, 0x48454C44u + static_cast<std::uint64_t>(t));
        auto samples = draw_samples(oracle, t, per_type, spec, rng);
        TypeMetrics& m = out.of(t);
        m.n = samples.size();
        double l1 = 0.0, bce = 0.0;
        for (const auto& s : samples) {
            FieldOutput o = field.eval(s.op);
            if (s.visible) {
                l1 += std::abs(o.depth() - s.depth);
                ++m.n_visible;
            }
            double truth = s.visible ? 1.0 : 0.0;
            double p1 = std::max(o.xi, lossdetail::kBceClamp);
            double p0 = std::max(1.0 - o.xi, lossdetail::kBceClamp);
            bce += -(truth * std::log(p1) + (1.0 - truth) * std::log(p0));
        }
        m.depth_l1 = m.n_visible ? l1 / static_cast<double>(m.n_visible) : 0.0;
        m.visibility_bce = m.n ? bce / static_cast<double>(m.n) : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Single-shape fitting

namespace traindetail {

/// Per-type epoch shuffles: each type owns a stream and hands out indices
/// without replacement, reshuffling when exhausted.
class EpochSampler {
public:
    EpochSampler(std::size_t pool_size, Rng rng)
        : rng_(rng), order_(pool_size), cursor_(0) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        shuffle();
    }

    void draw(std::size_t k, std::vector<std::size_t>& out) {
        for (std::size_t i = 0; i < k; ++i) {
            if (cursor_ == order_.size()) shuffle();
            out.push_back(order_[cursor_++]);
        }
    }

private:
    void shuffle() {
        for (std::size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng_.uniform_int(static_cast<int>(i))]);
        cursor_ = 0;
    }

    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_;
};

}  // namespace traindetail

/// Fits one PDDF to a dataset with Adam and reduce-on-plateau scheduling.
/// Deterministic given (dataset, config) at any thread count: batches come
/// from seeded per-type streams and gradient chunks reduce in fixed order.
inline std::pair<PddfModel, TrainReport> fit_shape(
    const Dataset& dataset, const SirenConfig& arch, const TrainConfig& config_in,
    const Oracle* heldout_oracle = nullptr) {
    using Real = float;
    const TrainConfig config = config_in.scaled();
    const int threads = config.threads > 0 ? config.threads : hardware_threads();

    PddfModel model = init_siren(arch, config.seed);
    SirenMlp<Real> net(model.weights);
    Adam<Real> adam(net);

    // per-type sample pools
    std::array<std::vector<const TrainingSample*>, 6> pools;
    for (const auto& s : dataset.samples)
        pools[static_cast<int>(s.kind)].push_back(&s);
    std::array<std::unique_ptr<traindetail::EpochSampler>, 6> epochs;
    for (SampleType t : kAllSampleTypes) {
        int i = static_cast<int>(t);
        if (config.batch_count(t) > pools[i].size())
            throw std::runtime_error(std::string("minibatch count for type ") +
                                     sample_type_letter(t) + " exceeds dataset pool");
        if (!pools[i].empty())
            epochs[i] = std::make_unique<traindetail::EpochSampler>(
                pools[i].size(), Rng::derive(config.seed, 0xE70C0000u + i));
    }
    Rng reg_rng = Rng::derive(config.seed, 0x5E600000u);

    TrainReport report;
    std::ofstream log;
    if (!config.log_path.empty()) {
        log.open(config.log_path);
        if (!log) throw std::runtime_error("cannot open training log: " + config.log_path);
    }

    const std::size_t kChunk = 512;  // fixed: reduction order is thread-count free
    double lr = config.lr;
    double ema = 0.0, best_ema = kInf;
    std::size_t since_best = 0, last_reduction = 0;
    const std::size_t ckpt_every = std::max<std::size_t>(1, config.iterations / 10);

    std::vector<const TrainingSample*> batch;
    std::vector<std::size_t> picks;
    std::vector<OrientedPoint> reg_points;
    const BoundingBox box;

    for (std::size_t iter = 0; iter < config.iterations; ++iter) {
        batch.clear();
        for (SampleType t : kAllSampleTypes) {
            int i = static_cast<int>(t);
            std::size_t k = config.batch_count(t);
            if (k == 0 || !epochs[i]) continue;
            picks.clear();
            epochs[i]->draw(k, picks);
            for (std::size_t idx : picks) batch.push_back(pools[i][idx]);
        }
        reg_points.clear();
        for (std::size_t i = 0; i < config.batch_reg; ++i)
            reg_points.push_back({reg_rng.in_box(box), reg_rng.unit_vector()});

        auto counts = lossdetail::count_active(batch, reg_points.size());

        const std::size_t ns = batch.size();
        const std::size_t sample_chunks = (ns + kChunk - 1) / kChunk;
        const std::size_t reg_chunks = (reg_points.size() + kChunk - 1) / kChunk;
        const std::size_t total_chunks = sample_chunks + reg_chunks;

        std::vector<lossdetail::Sums> sums(total_chunks);
        std::vector<typename SirenMlp<Real>::Grads> grads(total_chunks);
        parallel_chunks(total_chunks, 1, threads, [&](std::size_t c, std::size_t, std::size_t) {
            grads[c].init_like(net);
            if (c < sample_chunks) {
                std::size_t b = c * kChunk, e = std::min(ns, (c + 1) * kChunk);
                sums[c] = lossdetail::loss_batch<Real>(
                    net, std::span<const TrainingSample* const>(batch.data() + b, e - b),
                    {}, config.weights, counts, &grads[c]);
            } else {
                std::size_t b = (c - sample_chunks) * kChunk;
                std::size_t e = std::min(reg_points.size(), b + kChunk);
                sums[c] = lossdetail::loss_batch<Real>(
                    net, {}, std::span<const OrientedPoint>(reg_points.data() + b, e - b),
                    config.weights, counts, &grads[c]);
            }
        });
        for (std::size_t c = 1; c < total_chunks; ++c) {
            sums[0].add(sums[c]);
            grads[0].add(grads[c]);
        }
        LossBreakdown losses =
            total_chunks ? lossdetail::finalize(sums[0], counts, config.weights)
                         : LossBreakdown{};
        if (!std::isfinite(losses.total))
            throw std::runtime_error("non-finite loss at iteration " + std::to_string(iter));

        if (total_chunks) adam.step(net, grads[0], lr, config.beta1, config.beta2,
                                    config.adam_eps, iter + 1);

        // reduce-on-plateau: EMA of the total with a patience window
        ema = iter == 0 ? losses.total
                        : config.plateau_ema_alpha * losses.total +
                              (1.0 - config.plateau_ema_alpha) * ema;
        if (ema < best_ema) {
            best_ema = ema;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.plateau_patience &&
            iter + 1 - last_reduction >= config.plateau_min_gap) {
            lr *= config.plateau_factor;
            last_reduction = iter + 1;
            best_ema = ema;
            since_best = 0;
        }

        if ((iter + 1) % config.report_interval == 0) {
            report.history.push_back({iter + 1, lr, losses});
            if (log) {
                nlohmann::json j{{"iter", iter + 1},
                                 {"lr", lr},
                                 {"total", losses.total},
                                 {"depth", losses.depth},
                                 {"visibility", losses.visibility},
                                 {"normals", losses.normals},
                                 {"eikonal", losses.eikonal},
                                 {"weight_variance", losses.weight_variance},
                                 {"transition", losses.transition},
                                 {"xi_variance", losses.xi_variance}};
                log << j.dump() << '\n';
                log.flush();
            }
        }
        if (!config.checkpoint_path.empty() && (iter + 1) % ckpt_every == 0) {
            model.weights = net.export_weights();
            save_model(model, config.checkpoint_path);
        }
    }

    model.weights = net.export_weights();
    model.meta["iterations"] = config.iterations;
    model.meta["final_lr"] = lr;
    model.meta["seed"] = config.seed;
    model.meta["dataset"] = dataset.oracle_description;
    if (!config.checkpoint_path.empty()) save_model(model, config.checkpoint_path);

    if (heldout_oracle) {
        report.has_metrics = true;
        report.metrics = evaluate_held_out<Real>(
            model, *heldout_oracle, dataset.spec, config.heldout_per_type,
            config.seed ^ 0xAB5E17ULL);
    }
    return {std::move(model), std::move(report)};
}

/// Re-trains with one sample type removed and reports per-type held-out
/// errors, next to a baseline trained with everything.
inline std::pair<HeldOutMetrics, HeldOutMetrics> ablation_experiment(
    const Dataset& dataset, const SirenConfig& arch, const TrainConfig& config,
    SampleType ablate, const Oracle& oracle) {
    TrainConfig ablated = config;
    ablated.batch_counts[static_cast<int>(ablate)] = 0;
    Dataset filtered;
    filtered.spec = dataset.spec;
    filtered.spec.count(ablate) = 0;
    filtered.oracle_description = dataset.oracle_description;
    for (const auto& s : dataset.samples)
        if (s.kind != ablate) filtered.samples.push_back(s);

    auto [model_ab, report_ab] = fit_shape(filtered, arch, ablated, &oracle);
    auto [model_base, report_base] = fit_shape(dataset, arch, config, &oracle);
    (void)model_ab;
    (void)model_base;
    return {report_ab.metrics, report_base.metrics};
}

}  // namespace pddf
