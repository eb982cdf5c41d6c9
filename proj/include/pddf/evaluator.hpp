#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "pddf/core.hpp"
#include "pddf/geometry.hpp"

namespace pddf {

// Depth reported for rays that hit nothing; larger than any in-domain depth
// (the [-1,1]^3 diagonal is ~3.46) so composition weights stay sane.
constexpr double kMissDepth = 4.0;

/// Two-component mixture output of a field query. For non-probabilistic
/// evaluators (oracles, composed scenes) both depths coincide and w1 = 1.
struct FieldOutput {
    std::array<double, 2> d{kMissDepth, kMissDepth};
    double w1 = 1.0;
    double xi = 0.0;
    int i_star = 0;  // max-weight component, 0-based; ties pick 0

    double depth() const { return d[static_cast<std::size_t>(i_star)]; }
};

struct JetRequest {
    bool v_grads = false;
    // Pairs (t_i, t_j) for second directional derivatives t_j^T H_p[d_i*] t_i.
    std::vector<std::pair<Vec3, Vec3>> second_pairs;
};

struct FieldJet {
    FieldOutput out;
    std::array<Vec3, 2> grad_p_d{};
    Vec3 grad_p_w1{};
    Vec3 grad_p_xi{};
    bool has_v_grads = false;
    std::array<Vec3, 2> grad_v_d{};  // projected orthogonal to v
    std::vector<double> second;      // one entry per requested pair, for d_i*
};

/// Anything that maps oriented points to visibility and depth. Queries go
/// through evaluate()/evaluate_jet() so calls can be counted (the renderer
/// asserts its one-query-per-pixel contract against this counter).
class FieldEvaluator {
public:
    virtual ~FieldEvaluator() = default;

    FieldOutput evaluate(const OrientedPoint& op) const {
        eval_count_.fetch_add(1, std::memory_order_relaxed);
        return eval(op);
    }
    FieldJet evaluate_jet(const OrientedPoint& op, const JetRequest& want) const {
        jet_count_.fetch_add(1, std::memory_order_relaxed);
        return jet(op, want);
    }
    /// Batched evaluation; counts one query per oriented point. Subclasses
    /// with a vectorized path override eval_many.
    void evaluate_many(std::span<const OrientedPoint> ops,
                       std::span<FieldOutput> out) const {
        eval_count_.fetch_add(ops.size(), std::memory_order_relaxed);
        eval_many(ops, out);
    }

    virtual bool supports_jets() const { return false; }

    std::uint64_t eval_count() const { return eval_count_.load(); }
    std::uint64_t jet_count() const { return jet_count_.load(); }
    void reset_counters() const {
        eval_count_.store(0);
        jet_count_.store(0);
    }

protected:
    virtual FieldOutput eval(const OrientedPoint& op) const = 0;
    virtual FieldJet jet(const OrientedPoint&, const JetRequest&) const {
        throw std::logic_error("evaluator does not support jets");
    }
    virtual void eval_many(std::span<const OrientedPoint> ops,
                           std::span<FieldOutput> out) const {
        for (std::size_t i = 0; i < ops.size(); ++i) out[i] = eval(ops[i]);
    }

private:
    mutable std::atomic<std::uint64_t> eval_count_{0};
    mutable std::atomic<std::uint64_t> jet_count_{0};
};

/// Closed-form shapes exposed through the field interface, with exact
/// derivatives. Ground truth for the validators and renderer tests.
class AnalyticEvaluator final : public FieldEvaluator {
public:
    explicit AnalyticEvaluator(const AnalyticShape& shape) : shape_(shape) {}

    bool supports_jets() const override { return true; }
    const AnalyticShape& shape() const { return shape_; }

protected:
    FieldOutput eval(const OrientedPoint& op) const override {
        HitRecord h = analytic_ddf_eval(shape_, op);
        FieldOutput out;
        if (h.visible) {
            out.d = {h.depth, h.depth};
            out.xi = 1.0;
        }
        return out;
    }

    FieldJet jet(const OrientedPoint& op, const JetRequest& want) const override {
        AnalyticJet aj = analytic_ddf_jet(shape_, op);
        FieldJet j;
        if (aj.hit.visible) {
            j.out.d = {aj.hit.depth, aj.hit.depth};
            j.out.xi = 1.0;
        }
        j.grad_p_d = {aj.grad_p_d, aj.grad_p_d};
        // Visibility and weight fields are piecewise constant for an oracle.
        j.grad_p_w1 = Vec3{};
        j.grad_p_xi = Vec3{};
        if (want.v_grads) {
            j.has_v_grads = true;
            j.grad_v_d = {aj.grad_v_d, aj.grad_v_d};
        }
        j.second.reserve(want.second_pairs.size());
        for (const auto& [ti, tj] : want.second_pairs)
            j.second.push_back(aj.hess_p_d.quadratic(tj, ti));
        return j;
    }

private:
    AnalyticShape shape_;
};

/// Mesh raycasting behind the field interface (no jets). Handy for parity
/// tests between the mesh oracle and learned or analytic fields.
class MeshEvaluator final : public FieldEvaluator {
public:
    explicit MeshEvaluator(const TriangleMesh& mesh)
        : mesh_(&mesh), bvh_(mesh) {}

protected:
    FieldOutput eval(const OrientedPoint& op) const override {
        HitRecord h = bvh_.raycast(op);
        FieldOutput out;
        if (h.visible) {
            out.d = {h.depth, h.depth};
            out.xi = 1.0;
        }
        return out;
    }

private:
    const TriangleMesh* mesh_;
    MeshBvh bvh_;
};

/// Query rule for positions outside the domain box: walk the ray to the box
/// boundary, query there, and add the walked distance (visibility 0 if the
/// ray never reaches the box).
inline FieldOutput eval_with_box_rule(const FieldEvaluator& f,
                                      const OrientedPoint& op,
                                      const BoundingBox& box = {}) {
    if (box.contains(op.p)) return f.evaluate(op);
    auto entry = ray_box_entry(op.p, op.v, box);
    if (!entry) {
        FieldOutput out;
        out.xi = 0.0;
        return out;
    }
    const double walked = (*entry - op.p).norm();
    FieldOutput out = f.evaluate({*entry, op.v});
    out.d[0] += walked;
    out.d[1] += walked;
    return out;
}

}  // namespace pddf
