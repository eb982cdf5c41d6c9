#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pddf/evaluator.hpp"
#include "pddf/field.hpp"

namespace pddf {

/// World-to-object transform for one scene part: rotation, then uniform
/// scale, then translation (applied inversely to queries). Part depths scale
/// back to world units by s.
struct SimilarityTransform {
    double scale = 1.0;
    Mat3 rotation = Mat3::identity();  // object-to-world rotation
    Vec3 translation{};

    static SimilarityTransform identity() { return {}; }

    static SimilarityTransform from_quaternion(double s, double qw, double qx,
                                               double qy, double qz, const Vec3& t) {
        double n = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
        if (n == 0.0) throw std::invalid_argument("zero quaternion");
        qw /= n;
        qx /= n;
        qy /= n;
        qz /= n;
        Mat3 r;
        r.row[0] = {1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)};
        r.row[1] = {2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)};
        r.row[2] = {2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)};
        SimilarityTransform out{s, r, t};
        out.validate();
        return out;
    }

    void validate() const {
        if (!(scale > 0.0)) throw std::invalid_argument("transform scale must be positive");
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double dot = rotation.row[0][i] * rotation.row[0][j] +
                             rotation.row[1][i] * rotation.row[1][j] +
                             rotation.row[2][i] * rotation.row[2][j];
                double expect = i == j ? 1.0 : 0.0;
                if (std::abs(dot - expect) > 1e-9)
                    throw std::invalid_argument("rotation is not orthonormal");
            }
    }

    Vec3 rotate_to_object(const Vec3& v) const {  // R^T v
        return {rotation.row[0].x * v.x + rotation.row[1].x * v.y + rotation.row[2].x * v.z,
                rotation.row[0].y * v.x + rotation.row[1].y * v.y + rotation.row[2].y * v.z,
                rotation.row[0].z * v.x + rotation.row[1].z * v.y + rotation.row[2].z * v.z};
    }

    OrientedPoint to_object(const OrientedPoint& world) const {
        return {rotate_to_object(world.p - translation) / scale,
                rotate_to_object(world.v)};
    }
    double depth_to_world(double d_object) const { return scale * d_object; }
};

struct ComposeParams {
    double eta_t = 0.1;     // softmax temperature
    double epsilon_s = 0.01;  // inverse-depth floor

    void validate() const {
        if (!(eta_t > 0.0) || !(epsilon_s > 0.0))
            throw std::invalid_argument("compose parameters must be positive");
    }
};

struct ScenePart {
    SimilarityTransform transform;
    std::shared_ptr<const FieldEvaluator> evaluator;
};

struct ComposedOutput {
    double xi = 0.0;
    double depth = kMissDepth;
    std::vector<double> part_xi;
    std::vector<double> part_depth;  // world units
};

/// Soft aggregation of part fields: union visibility and a
/// visibility-over-depth softmax combination of world-unit depths. Parts
/// queried outside their own domain go through the boundary-entry rule.
inline ComposedOutput compose_eval(const std::vector<ScenePart>& parts,
                                   const ComposeParams& params,
                                   const OrientedPoint& world) {
    if (parts.empty()) throw std::invalid_argument("composition needs at least one part");
    params.validate();
    ComposedOutput out;
    out.part_xi.reserve(parts.size());
    out.part_depth.reserve(parts.size());
    double prod_invisible = 1.0;
    for (const auto& part : parts) {
        OrientedPoint obj = part.transform.to_object(world);
        double vn = obj.v.norm();
        obj.v = obj.v / vn;
        FieldOutput o = eval_with_box_rule(*part.evaluator, obj);
        out.part_xi.push_back(o.xi);
        out.part_depth.push_back(part.transform.depth_to_world(o.depth()));
        prod_invisible *= 1.0 - o.xi;
    }
    out.xi = 1.0 - prod_invisible;

    double max_score = -kInf;
    std::vector<double> scores(parts.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
        scores[k] = out.part_xi[k] / (params.eta_t * (params.epsilon_s + out.part_depth[k]));
        max_score = std::max(max_score, scores[k]);
    }
    double z = 0.0;
    for (double& s : scores) {
        s = std::exp(s - max_score);
        z += s;
    }
    double d = 0.0;
    for (std::size_t k = 0; k < parts.size(); ++k) d += scores[k] / z * out.part_depth[k];
    out.depth = d;
    return out;
}

/// Composed scene behind the shared evaluator interface (values only; the
/// gradient-based checks need per-part jets and are out of composition's
/// scope).
class ComposedEvaluator final : public FieldEvaluator {
public:
    ComposedEvaluator(std::vector<ScenePart> parts, ComposeParams params)
        : parts_(std::move(parts)), params_(params) {
        if (parts_.empty()) throw std::invalid_argument("composition needs at least one part");
        params_.validate();
        for (const auto& p : parts_) p.transform.validate();
    }

    const std::vector<ScenePart>& parts() const { return parts_; }
    const ComposeParams& params() const { return params_; }

protected:
    FieldOutput eval(const OrientedPoint& op) const override {
        ComposedOutput c = compose_eval(parts_, params_, op);
        FieldOutput out;
        out.d = {c.depth, c.depth};
        out.xi = c.xi;
        return out;
    }

private:
    std::vector<ScenePart> parts_;
    ComposeParams params_;
};

// ---------------------------------------------------------------------------
// Scene description files: a JSON list of parts, each one either a trained
// checkpoint or an analytic shape, with scale / rotation quaternion (w,x,y,z)
// / translation.

inline AnalyticShape parse_analytic_shape(const std::string& text) {
    auto split = [](const std::string& s, char sep) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        for (;;) {
            std::size_t pos = s.find(sep, start);
            parts.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return parts;
    };
    auto nums = [&](const std::string& s) {
        std::vector<double> out;
        for (const auto& tok : split(s, ',')) out.push_back(std::stod(tok));
        return out;
    };
    auto fields = split(text, ':');
    if (fields.empty()) throw std::invalid_argument("empty analytic shape spec");
    const std::string& kind = fields[0];
    if (kind == "sphere") {
        if (fields.size() < 2) throw std::invalid_argument("sphere needs a radius: " + text);
        double r = std::stod(fields[1]);
        Vec3 c{};
        if (fields.size() > 2) {
            auto v = nums(fields[2]);
            if (v.size() != 3) throw std::invalid_argument("sphere centre needs 3 numbers: " + text);
            c = {v[0], v[1], v[2]};
        }
        return AnalyticShape::sphere(c, r);
    }
    if (kind == "plane") {
        if (fields.size() == 2 && fields[1].find(',') == std::string::npos)
            return AnalyticShape::plane({0, 0, std::stod(fields[1])}, {0, 0, 1});
        if (fields.size() == 3) {
            auto p = nums(fields[1]), n = nums(fields[2]);
            if (p.size() == 3 && n.size() == 3)
                return AnalyticShape::plane({p[0], p[1], p[2]}, {n[0], n[1], n[2]});
        }
        throw std::invalid_argument("plane spec is plane:<z> or plane:px,py,pz:nx,ny,nz — got " + text);
    }
    if (kind == "box") {
        if (fields.size() == 2 && fields[1].find(',') == std::string::npos) {
            double h = std::stod(fields[1]);
            return AnalyticShape::box({-h, -h, -h}, {h, h, h});
        }
        if (fields.size() == 3) {
            auto mn = nums(fields[1]), mx = nums(fields[2]);
            if (mn.size() == 3 && mx.size() == 3)
                return AnalyticShape::box({mn[0], mn[1], mn[2]}, {mx[0], mx[1], mx[2]});
        }
        throw std::invalid_argument("box spec is box:<half> or box:mnx,mny,mnz:mxx,mxy,mxz — got " + text);
    }
    throw std::invalid_argument("unknown analytic shape kind: " + text);
}

/// Loads a scene JSON file. Relative checkpoint paths resolve against the
/// scene file's directory.
inline std::vector<ScenePart> load_scene(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene file: " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    if (!doc.is_array() || doc.empty())
        throw std::runtime_error("scene file must be a non-empty JSON array: " + path);
    std::string dir;
    if (auto pos = path.find_last_of('/'); pos != std::string::npos)
        dir = path.substr(0, pos + 1);

    std::vector<ScenePart> parts;
    for (const auto& item : doc) {
        ScenePart part;
        double s = item.value("scale", 1.0);
        Vec3 t{};
        if (item.contains("translation")) {
            auto v = item.at("translation");
            t = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
        }
        double qw = 1, qx = 0, qy = 0, qz = 0;
        if (item.contains("rotation")) {
            auto q = item.at("rotation");
            qw = q[0].get<double>();
            qx = q[1].get<double>();
            qy = q[2].get<double>();
            qz = q[3].get<double>();
        }
        part.transform = SimilarityTransform::from_quaternion(s, qw, qx, qy, qz, t);
        if (item.contains("analytic")) {
            part.evaluator = std::make_shared<AnalyticEvaluator>(
                parse_analytic_shape(item.at("analytic").get<std::string>()));
        } else if (item.contains("checkpoint")) {
            std::string cp = item.at("checkpoint").get<std::string>();
            if (!cp.empty() && cp.front() != '/') cp = dir + cp;
            part.evaluator = std::make_shared<ModelEvaluator>(load_model(cp));
        } else {
            throw std::runtime_error("scene part needs \"analytic\" or \"checkpoint\"");
        }
        parts.push_back(std::move(part));
    }
    return parts;
}

}  // namespace pddf
