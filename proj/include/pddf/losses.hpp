#pragma once

#include <span>
#include <vector>

#include "pddf/field.hpp"
#include "pddf/mlp.hpp"
#include "pddf/sampler.hpp"

namespace pddf {

struct LossWeights {
    double gamma_d = 5.0;
    double gamma_xi = 1.0;
    double gamma_n = 10.0;
    double gamma_v = 1.0;
    double gamma_ed = 0.05;
    double gamma_exi = 0.01;
    double gamma_t = 0.25;
    double epsilon_t = 2.0;   // desired weight-transition speed
    double gamma_vxi = 0.0;   // visibility-variance term, off by default
};

/// Per-term scalars. Every term is the mean over the samples it applies to;
/// the depth term carries the per-kind weight multiplier (doubled on A and U)
/// so that total is exactly the weighted sum of the fields.
struct LossBreakdown {
    double depth = 0.0;            // L_d
    double visibility = 0.0;       // L_xi
    double normals = 0.0;          // L_n
    double eikonal = 0.0;          // L_DE (its gammas live inside)
    double weight_variance = 0.0;  // L_V
    double transition = 0.0;       // L_T
    double xi_variance = 0.0;      // L_{V,xi}
    double total = 0.0;
};

inline double total_loss(const LossBreakdown& b, const LossWeights& w) {
    return w.gamma_d * b.depth + w.gamma_xi * b.visibility + w.gamma_n * b.normals +
           b.eikonal + w.gamma_v * b.weight_variance + w.gamma_t * b.transition +
           w.gamma_vxi * b.xi_variance;
}

namespace lossdetail {

// Term applicability by sample kind (Appendix-C matrix): gradient-based
// regularizers and the weight-variance term skip S/T/O; the transition term
// runs only on S/T; depth and visibility run everywhere labelled.
inline bool is_au(SampleType k) { return k == SampleType::A || k == SampleType::U; }
inline bool is_uab(SampleType k) {
    return k == SampleType::U || k == SampleType::A || k == SampleType::B;
}
inline bool is_st(SampleType k) { return k == SampleType::S || k == SampleType::T; }

struct Counts {
    std::size_t n_d = 0;    // labelled samples
    std::size_t n_n = 0;    // U/A/B
    std::size_t n_de = 0;   // U/A/B + regularization-only
    std::size_t n_v = 0;    // U/A/B + regularization-only
    std::size_t n_t = 0;    // S/T
    std::size_t n_vxi = 0;  // everything
};

inline Counts count_active(std::span<const TrainingSample* const> samples,
                           std::size_t n_reg) {
    Counts c;
    c.n_d = samples.size();
    for (const auto* s : samples) {
        if (is_uab(s->kind)) ++c.n_n;
        if (is_st(s->kind)) ++c.n_t;
    }
    c.n_de = c.n_n + n_reg;
    c.n_v = c.n_n + n_reg;
    c.n_vxi = samples.size() + n_reg;
    return c;
}

struct Sums {
    double d = 0, xi = 0, n = 0, de = 0, v = 0, t = 0, vxi = 0;
    void add(const Sums& o) {
        d += o.d;
        xi += o.xi;
        n += o.n;
        de += o.de;
        v += o.v;
        t += o.t;
        vxi += o.vxi;
    }
};

inline LossBreakdown finalize(const Sums& s, const Counts& c, const LossWeights& w) {
    LossBreakdown b;
    if (c.n_d) b.depth = s.d / static_cast<double>(c.n_d);
    if (c.n_d) b.visibility = s.xi / static_cast<double>(c.n_d);
    if (c.n_n) b.normals = s.n / static_cast<double>(c.n_n);
    if (c.n_de) b.eikonal = s.de / static_cast<double>(c.n_de);
    if (c.n_v) b.weight_variance = s.v / static_cast<double>(c.n_v);
    if (c.n_t) b.transition = s.t / static_cast<double>(c.n_t);
    if (c.n_vxi) b.xi_variance = s.vxi / static_cast<double>(c.n_vxi);
    b.total = total_loss(b, w);
    return b;
}

constexpr double kBceClamp = 1e-7;
constexpr double kDegenerateGrad = 1e-8;

template <typename Real>
struct GroupBuffers {
    using Mat = typename SirenMlp<Real>::Mat;
    Mat x;
    std::vector<Mat> tangents;
    typename SirenMlp<Real>::Cache cache;
    Mat y_bar;
    std::vector<Mat> v_bar;
};

/// Core of the objective: one pass over a batch (labelled samples plus
/// regularization-only points), producing per-term sums and, when `grads` is
/// given, exact parameter gradients of the batch total.
template <typename Real>
Sums loss_batch(const SirenMlp<Real>& net,
                std::span<const TrainingSample* const> samples,
                std::span<const OrientedPoint> reg_points, const LossWeights& w,
                const Counts& counts, typename SirenMlp<Real>::Grads* grads) {
    using Mat = typename SirenMlp<Real>::Mat;
    Sums sums;

    const double inv_d = counts.n_d ? 1.0 / counts.n_d : 0.0;
    const double inv_n = counts.n_n ? 1.0 / counts.n_n : 0.0;
    const double inv_de = counts.n_de ? 1.0 / counts.n_de : 0.0;
    const double inv_v = counts.n_v ? 1.0 / counts.n_v : 0.0;
    const double inv_t = counts.n_t ? 1.0 / counts.n_t : 0.0;
    const double inv_vxi = counts.n_vxi ? 1.0 / counts.n_vxi : 0.0;

    // --- labelled samples needing position gradients: U A B S T -----------
    std::vector<const TrainingSample*> full;
    std::vector<const TrainingSample*> value_only;  // O: no gradient terms
    full.reserve(samples.size());
    for (const auto* s : samples)
        (s->kind == SampleType::O ? value_only : full).push_back(s);

    auto pack_op = [&](Mat& x, std::size_t row, const OrientedPoint& op) {
        double nv = op.v.norm();
        x(row, 0) = static_cast<Real>(op.p.x);
        x(row, 1) = static_cast<Real>(op.p.y);
        x(row, 2) = static_cast<Real>(op.p.z);
        x(row, 3) = static_cast<Real>(op.v.x / nv);
        x(row, 4) = static_cast<Real>(op.v.y / nv);
        x(row, 5) = static_cast<Real>(op.v.z / nv);
    };

    // shared value-level pieces per row
    struct RowVals {
        double y0, y1, y2, y4;
        double d0, d1, w1, xi;
        double r0, r1, sw, sx;
        int istar;
    };
    auto map_row = [](const Mat& y, std::size_t r) {
        RowVals v;
        v.y0 = static_cast<double>(y(r, headslot::kDepth0));
        v.y1 = static_cast<double>(y(r, headslot::kDepth1));
        v.y2 = static_cast<double>(y(r, headslot::kWeightLogit));
        v.y4 = static_cast<double>(y(r, headslot::kXiLogit));
        v.d0 = std::max(0.0, v.y0);
        v.d1 = std::max(0.0, v.y1);
        v.w1 = detail::sigmoid(v.y2);
        v.xi = detail::sigmoid(v.y4);
        v.r0 = v.y0 > 0.0 ? 1.0 : 0.0;
        v.r1 = v.y1 > 0.0 ? 1.0 : 0.0;
        v.sw = v.w1 * (1.0 - v.w1);
        v.sx = v.xi * (1.0 - v.xi);
        v.istar = v.w1 >= 0.5 ? 0 : 1;
        return v;
    };

    auto bce = [](double truth, double pred, double& dpred) {
        double p1 = std::max(pred, kBceClamp);
        double p0 = std::max(1.0 - pred, kBceClamp);
        dpred = 0.0;
        if (pred > kBceClamp) dpred -= truth / p1;
        if (1.0 - pred > kBceClamp) dpred += (1.0 - truth) / p0;
        return -(truth * std::log(p1) + (1.0 - truth) * std::log(p0));
    };

    auto depth_and_visibility = [&](const TrainingSample& s, const RowVals& rv,
                                    double* y_bar) {
        const double mult = is_au(s.kind) ? 2.0 : 1.0;
        const double xi_gt = s.visible ? 1.0 : 0.0;
        const double dhat = rv.istar == 0 ? rv.d0 : rv.d1;
        if (s.visible) {
            const double diff = dhat - s.depth;
            sums.d += mult * diff * diff;
            if (y_bar) {
                const double rstar = rv.istar == 0 ? rv.r0 : rv.r1;
                y_bar[rv.istar == 0 ? headslot::kDepth0 : headslot::kDepth1] +=
                    w.gamma_d * inv_d * mult * 2.0 * diff * rstar;
            }
        }
        double dxi;
        sums.xi += bce(xi_gt, rv.xi, dxi);
        if (y_bar) y_bar[headslot::kXiLogit] += w.gamma_xi * inv_d * dxi * rv.sx;
    };

    auto weight_variance = [&](const RowVals& rv, double* y_bar) {
        sums.v += rv.w1 * (1.0 - rv.w1);
        if (y_bar)
            y_bar[headslot::kWeightLogit] += w.gamma_v * inv_v * (1.0 - 2.0 * rv.w1) * rv.sw;
    };

    auto xi_variance = [&](const RowVals& rv, double* y_bar) {
        if (w.gamma_vxi == 0.0) return;
        sums.vxi += rv.xi * (1.0 - rv.xi);
        if (y_bar)
            y_bar[headslot::kXiLogit] += w.gamma_vxi * inv_vxi * (1.0 - 2.0 * rv.xi) * rv.sx;
    };

    if (!full.empty()) {
        const std::size_t B = full.size();
        GroupBuffers<Real> g;
        g.x.resize(B, 6);
        for (std::size_t r = 0; r < B; ++r) pack_op(g.x, r, full[r]->op);
        g.tangents.assign(3, Mat::Zero(B, 6));
        for (int k = 0; k < 3; ++k) g.tangents[k].col(k).setOnes();
        net.forward_jet(g.x, g.tangents, g.cache);

        const bool want = grads != nullptr;
        if (want) {
            g.y_bar = Mat::Zero(B, 5);
            g.v_bar.assign(3, Mat::Zero(B, 5));
        }
        for (std::size_t r = 0; r < B; ++r) {
            const TrainingSample& s = *full[r];
            RowVals rv = map_row(g.cache.y, r);
            double yb[5] = {0, 0, 0, 0, 0};
            double vb[3][5] = {};
            double* ybp = want ? yb : nullptr;

            depth_and_visibility(s, rv, ybp);

            const Vec3 v{static_cast<double>(g.x(r, 3)), static_cast<double>(g.x(r, 4)),
                         static_cast<double>(g.x(r, 5))};
            // raw logit/head tangents along the three position axes
            auto head_tan = [&](int slot, int k) {
                return static_cast<double>(g.cache.v[k](r, slot));
            };
            const double rstar = rv.istar == 0 ? rv.r0 : rv.r1;
            const int dstar = rv.istar == 0 ? headslot::kDepth0 : headslot::kDepth1;
            const Vec3 grad_dstar{rstar * head_tan(dstar, 0), rstar * head_tan(dstar, 1),
                                  rstar * head_tan(dstar, 2)};

            if (is_uab(s.kind)) {
                if (s.visible && !s.has_normal)
                    throw std::runtime_error("visible U/A/B sample without a normal");
                // normals loss on visible samples with a usable gradient
                if (s.visible && s.has_normal) {
                    const double glen = grad_dstar.norm();
                    if (glen >= kDegenerateGrad) {
                        const double u = s.normal.dot(grad_dstar);
                        sums.n += -std::abs(u) / glen;
                        if (want) {
                            const double sgn = u >= 0.0 ? 1.0 : -1.0;
                            const Vec3 dldg = s.normal * (-sgn / glen) +
                                              grad_dstar * (std::abs(u) / (glen * glen * glen));
                            for (int k = 0; k < 3; ++k)
                                vb[k][dstar] += w.gamma_n * inv_n * dldg[k] * rstar;
                        }
                    }
                }
                // directed Eikonal: depth part on visible, visibility part always
                double de = 0.0;
                if (s.visible) {
                    for (int i = 0; i < 2; ++i) {
                        const int slot = i == 0 ? headslot::kDepth0 : headslot::kDepth1;
                        const double ri = i == 0 ? rv.r0 : rv.r1;
                        const double dot =
                            ri * (head_tan(slot, 0) * v.x + head_tan(slot, 1) * v.y +
                                  head_tan(slot, 2) * v.z);
                        const double e = dot + 1.0;
                        de += w.gamma_ed * e * e;
                        if (want && ri > 0.0) {
                            for (int k = 0; k < 3; ++k)
                                vb[k][slot] += inv_de * w.gamma_ed * 2.0 * e * v[k] * ri;
                        }
                    }
                }
                {
                    const double tlogit = head_tan(headslot::kXiLogit, 0) * v.x +
                                          head_tan(headslot::kXiLogit, 1) * v.y +
                                          head_tan(headslot::kXiLogit, 2) * v.z;
                    const double e = rv.sx * tlogit;
                    de += w.gamma_exi * e * e;
                    if (want) {
                        const double sxx = rv.sx * (1.0 - 2.0 * rv.xi);
                        for (int k = 0; k < 3; ++k)
                            vb[k][headslot::kXiLogit] +=
                                inv_de * w.gamma_exi * 2.0 * e * rv.sx * v[k];
                        yb[headslot::kXiLogit] += inv_de * w.gamma_exi * 2.0 * e * tlogit * sxx;
                    }
                }
                sums.de += de;
                weight_variance(rv, ybp);
            }

            if (is_st(s.kind)) {
                // weight transition loss along the data normal, guarded by the
                // degenerate-normal condition on the active depth gradient
                if (!s.has_normal) throw std::runtime_error("S/T sample without a normal");
                if (grad_dstar.norm() >= kDegenerateGrad) {
                    const double tlogit = head_tan(headslot::kWeightLogit, 0) * s.normal.x +
                                          head_tan(headslot::kWeightLogit, 1) * s.normal.y +
                                          head_tan(headslot::kWeightLogit, 2) * s.normal.z;
                    const double dwn = rv.sw * tlogit;
                    const double a = std::abs(dwn);
                    const double h = w.epsilon_t - a;
                    if (h > 0.0) {
                        sums.t += h * h;
                        if (want && a > 0.0) {
                            const double dldD = -2.0 * h * (dwn >= 0.0 ? 1.0 : -1.0);
                            const double sww = rv.sw * (1.0 - 2.0 * rv.w1);
                            for (int k = 0; k < 3; ++k)
                                vb[k][headslot::kWeightLogit] +=
                                    w.gamma_t * inv_t * dldD * rv.sw * s.normal[k];
                            yb[headslot::kWeightLogit] +=
                                w.gamma_t * inv_t * dldD * tlogit * sww;
                        }
                    } else if (h == 0.0) {
                        // hinge boundary: zero loss, zero gradient
                    }
                }
            }

            xi_variance(rv, ybp);

            if (want) {
                for (int c = 0; c < 5; ++c) {
                    g.y_bar(r, c) = static_cast<Real>(yb[c]);
                    for (int k = 0; k < 3; ++k) g.v_bar[k](r, c) = static_cast<Real>(vb[k][c]);
                }
            }
        }
        if (grads) net.backward(g.cache, g.y_bar, g.v_bar, *grads);
    }

    if (!value_only.empty()) {
        const std::size_t B = value_only.size();
        GroupBuffers<Real> g;
        g.x.resize(B, 6);
        for (std::size_t r = 0; r < B; ++r) pack_op(g.x, r, value_only[r]->op);
        net.forward_jet(g.x, {}, g.cache);
        const bool want = grads != nullptr;
        if (want) g.y_bar = Mat::Zero(B, 5);
        for (std::size_t r = 0; r < B; ++r) {
            RowVals rv = map_row(g.cache.y, r);
            double yb[5] = {0, 0, 0, 0, 0};
            double* ybp = want ? yb : nullptr;
            depth_and_visibility(*value_only[r], rv, ybp);
            xi_variance(rv, ybp);
            if (want)
                for (int c = 0; c < 5; ++c) g.y_bar(r, c) = static_cast<Real>(yb[c]);
        }
        if (grads) net.backward(g.cache, g.y_bar, {}, *grads);
    }

    // --- regularization-only points: L_V plus the visibility-gradient part
    // of L_DE, with one tangent along the view direction ------------------
    if (!reg_points.empty()) {
        const std::size_t B = reg_points.size();
        GroupBuffers<Real> g;
        g.x.resize(B, 6);
        for (std::size_t r = 0; r < B; ++r) pack_op(g.x, r, reg_points[r]);
        g.tangents.assign(1, Mat::Zero(B, 6));
        for (std::size_t r = 0; r < B; ++r)
            for (int k = 0; k < 3; ++k) g.tangents[0](r, k) = g.x(r, 3 + k);
        net.forward_jet(g.x, g.tangents, g.cache);
        const bool want = grads != nullptr;
        if (want) {
            g.y_bar = Mat::Zero(B, 5);
            g.v_bar.assign(1, Mat::Zero(B, 5));
        }
        for (std::size_t r = 0; r < B; ++r) {
            RowVals rv = map_row(g.cache.y, r);
            double yb[5] = {0, 0, 0, 0, 0};
            double vb[5] = {0, 0, 0, 0, 0};
            double* ybp = want ? yb : nullptr;

            const double tlogit = static_cast<double>(g.cache.v[0](r, headslot::kXiLogit));
            const double e = rv.sx * tlogit;
            sums.de += w.gamma_exi * e * e;
            weight_variance(rv, ybp);
            xi_variance(rv, ybp);
            if (want) {
                const double sxx = rv.sx * (1.0 - 2.0 * rv.xi);
                vb[headslot::kXiLogit] += inv_de * w.gamma_exi * 2.0 * e * rv.sx;
                yb[headslot::kXiLogit] += inv_de * w.gamma_exi * 2.0 * e * tlogit * sxx;
                for (int c = 0; c < 5; ++c) {
                    g.y_bar(r, c) = static_cast<Real>(yb[c]);
                    g.v_bar[0](r, c) = static_cast<Real>(vb[c]);
                }
            }
        }
        if (grads) net.backward(g.cache, g.y_bar, g.v_bar, *grads);
    }

    return sums;
}

}  // namespace lossdetail

/// All objective terms for a batch, averaged per active subset. Throws when a
/// sample that a term needs a normal for lacks one.
inline LossBreakdown loss_terms(const PddfModel& model,
                                std::span<const TrainingSample> batch,
                                const LossWeights& weights,
                                std::span<const OrientedPoint> reg_points = {}) {
    SirenMlp<double> net(model.weights);
    std::vector<const TrainingSample*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& s : batch) ptrs.push_back(&s);
    auto counts = lossdetail::count_active(ptrs, reg_points.size());
    auto sums = lossdetail::loss_batch<double>(net, ptrs, reg_points, weights,
                                               counts, nullptr);
    return lossdetail::finalize(sums, counts, weights);
}

}  // namespace pddf
