#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "pddf/evaluator.hpp"
#include "pddf/field.hpp"

namespace pddf {

struct CheckConfig {
    std::size_t n_samples = 4096;
    std::uint64_t seed = 0;
    double silhouette_cutoff = 0.05;  // exclude |n.v| below this
    double xi_visible = 0.5;
    double eikonal_tolerance = 0.1;        // mean residual
    double gradnorm_tolerance = 0.05;      // violation fraction, at 5% slack
    double consistency_tolerance = 0.1;    // median relative residual
    double view_tolerance = 0.05;          // violation fraction
    double view_depth_slack = 0.02;
};

struct PropertyReport {
    std::string property;
    std::size_t samples = 0;
    double mean = 0.0, median = 0.0, p95 = 0.0;
    double violation_fraction = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    nlohmann::json extra;

    nlohmann::json to_json() const {
        nlohmann::json j{{"property", property}, {"samples", samples},
                         {"mean", mean},         {"median", median},
                         {"p95", p95},           {"violation_fraction", violation_fraction},
                         {"tolerance", tolerance}, {"pass", pass}};
        if (!extra.empty()) j["extra"] = extra;
        return j;
    }
};

namespace validatordetail {

struct Stats {
    double mean = 0.0, median = 0.0, p95 = 0.0;
};

inline Stats residual_stats(std::vector<double>& r) {
    Stats s;
    if (r.empty()) return s;
    double sum = 0.0;
    for (double v : r) sum += v;
    s.mean = sum / static_cast<double>(r.size());
    std::sort(r.begin(), r.end());
    s.median = r[r.size() / 2];
    s.p95 = r[static_cast<std::size_t>(0.95 * (r.size() - 1))];
    return s;
}

/// Draws a visible oriented point with a well-conditioned normal; the jet at
/// it comes along for free.
inline bool draw_checkable(const FieldEvaluator& field, const CheckConfig& cfg,
                           Rng& rng, const JetRequest& want, OrientedPoint& op,
                           FieldJet& jet) {
    const BoundingBox box;
    for (int tries = 0; tries < 10000; ++tries) {
        op = {rng.in_box(box), rng.unit_vector()};
        jet = field.evaluate_jet(op, want);
        if (jet.out.xi < cfg.xi_visible) continue;
        auto n = surface_normal_estimate(jet, op.v);
        if (!n) continue;
        if (std::abs(n->dot(op.v)) < cfg.silhouette_cutoff) continue;
        return true;
    }
    return false;
}

}  // namespace validatordetail

/// Property I: depth decreases at unit rate along the ray on visible points,
/// and visibility is locally constant along it.
inline PropertyReport check_directed_eikonal(const FieldEvaluator& field,
                                             const CheckConfig& cfg) {
    Rng rng = Rng::derive(cfg.seed, 0xE1C01ULL);
    std::vector<double> depth_res, xi_res;
    JetRequest want;
    OrientedPoint op;
    FieldJet jet;
    while (depth_res.size() < cfg.n_samples) {
        if (!validatordetail::draw_checkable(field, cfg, rng, want, op, jet)) break;
        const Vec3& g = jet.grad_p_d[static_cast<std::size_t>(jet.out.i_star)];
        depth_res.push_back(std::abs(g.dot(op.v) + 1.0));
        xi_res.push_back(std::abs(jet.grad_p_xi.dot(op.v)));
    }
    // the visibility-gradient residual is also probed away from the surface
    Rng rng2 = Rng::derive(cfg.seed, 0xE1C02ULL);
    const BoundingBox box;
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        OrientedPoint any{rng2.in_box(box), rng2.unit_vector()};
        FieldJet j = field.evaluate_jet(any, want);
        xi_res.push_back(std::abs(j.grad_p_xi.dot(any.v)));
    }

    PropertyReport rep;
    rep.property = "directed_eikonal";
    rep.samples = depth_res.size();
    auto s = validatordetail::residual_stats(depth_res);
    rep.mean = s.mean;
    rep.median = s.median;
    rep.p95 = s.p95;
    rep.tolerance = cfg.eikonal_tolerance;
    auto sx = validatordetail::residual_stats(xi_res);
    rep.extra = {{"xi_grad_mean", sx.mean}, {"xi_grad_p95", sx.p95}};
    rep.pass = rep.samples > 0 && rep.mean < rep.tolerance;
    return rep;
}

/// ||grad_p d|| >= 1 on visible points (up to 5% slack).
inline PropertyReport check_grad_norm_bound(const FieldEvaluator& field,
                                            const CheckConfig& cfg) {
    Rng rng = Rng::derive(cfg.seed, 0x6B01ULL);
    std::vector<double> deficit;
    std::size_t violations = 0, n = 0;
    JetRequest want;
    OrientedPoint op;
    FieldJet jet;
    while (n < cfg.n_samples) {
        if (!validatordetail::draw_checkable(field, cfg, rng, want, op, jet)) break;
        ++n;
        const double norm = jet.grad_p_d[static_cast<std::size_t>(jet.out.i_star)].norm();
        deficit.push_back(std::max(0.0, 1.0 - norm));
        if (norm < 1.0 - 0.05) ++violations;
    }
    PropertyReport rep;
    rep.property = "grad_norm_bound";
    rep.samples = n;
    auto s = validatordetail::residual_stats(deficit);
    rep.mean = s.mean;
    rep.median = s.median;
    rep.p95 = s.p95;
    rep.violation_fraction = n ? static_cast<double>(violations) / n : 0.0;
    rep.tolerance = cfg.gradnorm_tolerance;
    rep.pass = n > 0 && rep.violation_fraction < rep.tolerance;
    return rep;
}

/// Property III: rotational view perturbations match position pushes scaled
/// by depth.
inline PropertyReport check_gradient_consistency(const FieldEvaluator& field,
                                                 const CheckConfig& cfg) {
    Rng rng = Rng::derive(cfg.seed, 0x6C03ULL);
    std::vector<double> res;
    JetRequest want;
    want.v_grads = true;
    OrientedPoint op;
    FieldJet jet;
    while (res.size() < cfg.n_samples) {
        if (!validatordetail::draw_checkable(field, cfg, rng, want, op, jet)) break;
        Vec3 omega = rng.unit_vector();
        Vec3 dv = omega.cross(op.v);
        double len = dv.norm();
        if (len < 1e-3) continue;
        dv = dv / len;
        const std::size_t i = static_cast<std::size_t>(jet.out.i_star);
        const double lhs = jet.grad_v_d[i].dot(dv);
        const double rhs = jet.out.depth() * jet.grad_p_d[i].dot(dv);
        res.push_back(std::abs(lhs - rhs) / (std::abs(rhs) + 1e-6));
    }
    PropertyReport rep;
    rep.property = "gradient_consistency";
    rep.samples = res.size();
    auto s = validatordetail::residual_stats(res);
    rep.mean = s.mean;
    rep.median = s.median;
    rep.p95 = s.p95;
    rep.tolerance = cfg.consistency_tolerance;
    rep.pass = rep.samples > 0 && rep.median < rep.tolerance;
    return rep;
}

/// A surface point seen from one oriented point must be opaque from every
/// other viewpoint whose ray meets it, with depth bounded by that distance.
/// Works on any evaluator (no jets needed).
inline PropertyReport check_view_consistency(const FieldEvaluator& field,
                                             const CheckConfig& cfg) {
    Rng rng = Rng::derive(cfg.seed, 0x7C04ULL);
    const BoundingBox box;
    std::size_t n = 0, vis_fail = 0, depth_fail = 0;
    std::vector<double> excess;
    while (n < cfg.n_samples) {
        OrientedPoint first{rng.in_box(box), rng.unit_vector()};
        FieldOutput o1 = field.evaluate(first);
        if (o1.xi < cfg.xi_visible) continue;
        Vec3 q1 = first.p + first.v * o1.depth();
        if (!box.contains(q1, 1e-9)) continue;
        Vec3 p2 = rng.in_box(box);
        Vec3 diff = q1 - p2;
        double dist = diff.norm();
        if (dist < 1e-3) continue;
        OrientedPoint second{p2, diff / dist};
        FieldOutput o2 = field.evaluate(second);
        ++n;
        if (o2.xi < cfg.xi_visible) {
            ++vis_fail;
            continue;
        }
        double over = o2.depth() - (dist + cfg.view_depth_slack);
        excess.push_back(std::max(0.0, over));
        if (over > 0.0) ++depth_fail;
    }
    PropertyReport rep;
    rep.property = "view_consistency";
    rep.samples = n;
    auto s = validatordetail::residual_stats(excess);
    rep.mean = s.mean;
    rep.median = s.median;
    rep.p95 = s.p95;
    rep.violation_fraction = n ? static_cast<double>(vis_fail + depth_fail) / n : 0.0;
    rep.tolerance = cfg.view_tolerance;
    rep.extra = {{"visibility_failures", vis_fail}, {"depth_bound_failures", depth_fail}};
    rep.pass = n > 0 && rep.violation_fraction < rep.tolerance;
    return rep;
}

}  // namespace pddf
