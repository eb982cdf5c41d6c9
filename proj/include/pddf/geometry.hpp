#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "pddf/core.hpp"
#include "pddf/rng.hpp"

namespace pddf {

// Determinant cutoff for ray-triangle intersection and other near-parallel
// rejections.
constexpr double kDetEpsilon = 1e-9;
// Minimum t when re-casting from a point that lies on the surface and the ray
// runs along it; avoids spurious grazing hits on neighbouring triangles.
constexpr double kSelfHitEpsilon = 1e-7;

struct Mat3 {
    std::array<Vec3, 3> row{};  // row-major

    static Mat3 zero() { return {}; }
    static Mat3 identity() {
        Mat3 m;
        m.row[0] = {1, 0, 0};
        m.row[1] = {0, 1, 0};
        m.row[2] = {0, 0, 1};
        return m;
    }
    static Mat3 outer(const Vec3& a, const Vec3& b) {
        Mat3 m;
        for (int i = 0; i < 3; ++i) m.row[i] = b * a[i];
        return m;
    }
    Vec3 apply(const Vec3& x) const {
        return {row[0].dot(x), row[1].dot(x), row[2].dot(x)};
    }
    double quadratic(const Vec3& a, const Vec3& b) const {  // a^T M b
        return a.dot(apply(b));
    }
    Mat3 operator+(const Mat3& o) const {
        Mat3 m;
        for (int i = 0; i < 3; ++i) m.row[i] = row[i] + o.row[i];
        return m;
    }
    Mat3 operator-(const Mat3& o) const {
        Mat3 m;
        for (int i = 0; i < 3; ++i) m.row[i] = row[i] - o.row[i];
        return m;
    }
    Mat3 operator*(double s) const {
        Mat3 m;
        for (int i = 0; i < 3; ++i) m.row[i] = row[i] * s;
        return m;
    }
};

struct TriangleHit {
    double t = 0.0;
    double u = 0.0, v = 0.0;  // barycentric coordinates of the hit
};

/// Determinant-based ray/triangle intersection. Returns the smallest t >= t_min
/// with the hit inside the closed triangle, or nullopt. Degenerate (zero-area)
/// triangles and near-parallel rays are misses.
inline std::optional<TriangleHit> ray_triangle_intersect(
    const Vec3& origin, const UnitVec3& dir, const Vec3& a, const Vec3& b,
    const Vec3& c, double t_min = 0.0) {
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < kDetEpsilon) return std::nullopt;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = origin - a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = e2.dot(qvec) * inv_det;
    if (t < t_min) return std::nullopt;
    return TriangleHit{t, u, v};
}

/// First intersection of the ray p + t v (t >= 0) with the box boundary.
/// A point already inside the box is returned unchanged.
inline std::optional<Vec3> ray_box_entry(const Vec3& p, const UnitVec3& v,
                                         const BoundingBox& box) {
    if (box.contains(p)) return p;
    double t_enter = -kInf, t_exit = kInf;
    for (int a = 0; a < 3; ++a) {
        if (v[a] == 0.0) {
            if (p[a] < box.min[a] || p[a] > box.max[a]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[a] - p[a]) / v[a];
        double t1 = (box.max[a] - p[a]) / v[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_enter > t_exit || t_exit < 0.0 || t_enter < 0.0) return std::nullopt;
    return p + v * t_enter;
}

/// Last boundary crossing of p + t v, t >= 0. For p inside the box this is the
/// exit point of the ray; for p outside it is the far side of the crossing
/// interval (nullopt if the ray misses).
inline std::optional<Vec3> ray_box_exit(const Vec3& p, const UnitVec3& v,
                                        const BoundingBox& box) {
    double t_enter = -kInf, t_exit = kInf;
    for (int a = 0; a < 3; ++a) {
        if (v[a] == 0.0) {
            if (p[a] < box.min[a] || p[a] > box.max[a]) return std::nullopt;
            continue;
        }
        double t0 = (box.min[a] - p[a]) / v[a];
        double t1 = (box.max[a] - p[a]) / v[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
    }
    if (t_enter > t_exit || t_exit < 0.0) return std::nullopt;
    return p + v * t_exit;
}

// ---------------------------------------------------------------------------
// Triangle meshes

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;
    std::vector<UnitVec3> tri_normals;
    std::vector<double> tri_areas;

    std::size_t triangle_count() const { return triangles.size(); }

    void compute_derived() {
        tri_normals.resize(triangles.size());
        tri_areas.resize(triangles.size());
        for (std::size_t i = 0; i < triangles.size(); ++i) {
            const auto& t = triangles[i];
            Vec3 n = (vertices[t[1]] - vertices[t[0]])
                         .cross(vertices[t[2]] - vertices[t[0]]);
            double len = n.norm();
            tri_areas[i] = 0.5 * len;
            tri_normals[i] = len > 0.0 ? n / len : Vec3{0, 0, 1};
        }
    }

    BoundingBox bounds() const {
        BoundingBox b{{kInf, kInf, kInf}, {-kInf, -kInf, -kInf}};
        for (const auto& v : vertices) {
            b.min = b.min.cwise_min(v);
            b.max = b.max.cwise_max(v);
        }
        return b;
    }

    /// Translate the bounding-box centre to the origin and scale so the
    /// longest axis-aligned side equals 2.
    void normalize() {
        if (vertices.empty()) return;
        BoundingBox b = bounds();
        Vec3 c = b.center();
        Vec3 e = b.extent();
        double longest = std::max({e.x, e.y, e.z});
        double s = longest > 0.0 ? 2.0 / longest : 1.0;
        for (auto& v : vertices) v = (v - c) * s;
        compute_derived();
    }

    double total_area() const {
        return std::accumulate(tri_areas.begin(), tri_areas.end(), 0.0);
    }
};

/// ASCII OBJ loader: v and f lines only, faces fan-triangulated. Normals,
/// texture coordinates and any other statements are ignored.
inline TriangleMesh load_obj(std::istream& in) {
    TriangleMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) throw std::runtime_error("bad OBJ vertex line: " + line);
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<std::uint32_t> idx;
            std::string tok;
            while (ls >> tok) {
                // "i", "i/j", "i/j/k", "i//k" all start with the vertex index
                long v = std::strtol(tok.c_str(), nullptr, 10);
                long n = static_cast<long>(mesh.vertices.size());
                if (v < 0) v = n + v + 1;
                if (v < 1 || v > n) throw std::runtime_error("OBJ face index out of range: " + line);
                idx.push_back(static_cast<std::uint32_t>(v - 1));
            }
            for (std::size_t k = 2; k < idx.size(); ++k)
                mesh.triangles.push_back({idx[0], idx[k - 1], idx[k]});
        }
    }
    mesh.compute_derived();
    return mesh;
}

inline TriangleMesh load_obj_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open OBJ file: " + path);
    return load_obj(in);
}

inline void save_obj_file(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write OBJ file: " + path);
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

/// Icosphere with vertices on the sphere of the given radius.
inline TriangleMesh make_icosphere(int subdivisions, double radius = 1.0) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<std::uint32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& v : verts) v = v.normalized();

    for (int s = 0; s < subdivisions; ++s) {
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(faces.size() * 4);
        std::vector<std::pair<std::uint64_t, std::uint32_t>> edge_cache;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) -> std::uint32_t {
            std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
            for (const auto& [k, idx] : edge_cache)
                if (k == key) return idx;
            Vec3 m = ((verts[a] + verts[b]) * 0.5).normalized();
            verts.push_back(m);
            std::uint32_t idx = static_cast<std::uint32_t>(verts.size() - 1);
            edge_cache.emplace_back(key, idx);
            return idx;
        };
        for (const auto& f : faces) {
            std::uint32_t ab = midpoint(f[0], f[1]);
            std::uint32_t bc = midpoint(f[1], f[2]);
            std::uint32_t ca = midpoint(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    TriangleMesh mesh;
    mesh.vertices = std::move(verts);
    for (auto& v : mesh.vertices) v *= radius;
    mesh.triangles = std::move(faces);
    mesh.compute_derived();
    return mesh;
}

// ---------------------------------------------------------------------------
// Raycasting

namespace detail {

inline void consider_triangle(const TriangleMesh& mesh, const Vec3& origin,
                              const UnitVec3& dir, std::uint32_t idx,
                              double t_min, double& best_t,
                              std::int64_t& best_idx) {
    const auto& tri = mesh.triangles[idx];
    auto hit = ray_triangle_intersect(origin, dir, mesh.vertices[tri[0]],
                                      mesh.vertices[tri[1]],
                                      mesh.vertices[tri[2]], t_min);
    if (!hit) return;
    // Ties on shared edges resolve to the lowest triangle index.
    if (hit->t < best_t || (hit->t == best_t && static_cast<std::int64_t>(idx) < best_idx)) {
        best_t = hit->t;
        best_idx = idx;
    }
}

inline HitRecord finish_hit(const TriangleMesh& mesh, const UnitVec3& dir,
                            double best_t, std::int64_t best_idx) {
    if (best_idx < 0) return HitRecord::miss();
    HitRecord rec;
    rec.visible = true;
    rec.depth = best_t;
    rec.normal = mesh.tri_normals[static_cast<std::size_t>(best_idx)];
    if (rec.normal.dot(dir) > 0.0) rec.normal = -rec.normal;
    rec.triangle_index = static_cast<std::uint32_t>(best_idx);
    return rec;
}

}  // namespace detail

/// Reference raycaster: minimum-t hit over every triangle.
inline HitRecord raycast_mesh_brute(const TriangleMesh& mesh,
                                    const OrientedPoint& op,
                                    double t_min = 0.0) {
    double best_t = kInf;
    std::int64_t best_idx = -1;
    for (std::uint32_t i = 0; i < mesh.triangle_count(); ++i)
        detail::consider_triangle(mesh, op.p, op.v, i, t_min, best_t, best_idx);
    return detail::finish_hit(mesh, op.v, best_t, best_idx);
}

/// Bounding-volume hierarchy over the triangles of one mesh. Traversal yields
/// results bit-identical to the brute-force caster: nodes are culled only when
/// strictly beyond the current best hit, and index ties break low.
class MeshBvh {
public:
    explicit MeshBvh(const TriangleMesh& mesh) : mesh_(&mesh) { build(); }

    HitRecord raycast(const OrientedPoint& op, double t_min = 0.0) const {
        double best_t = kInf;
        std::int64_t best_idx = -1;
        if (!nodes_.empty()) {
            std::array<std::uint32_t, 64> stack;
            int top = 0;
            stack[top++] = 0;
            while (top > 0) {
                const Node& node = nodes_[stack[--top]];
                double t_entry;
                if (!slab_test(node.box, op, t_entry)) continue;
                if (t_entry > best_t) continue;
                if (node.count > 0) {
                    for (std::uint32_t k = 0; k < node.count; ++k)
                        detail::consider_triangle(*mesh_, op.p, op.v,
                                                  order_[node.first + k], t_min,
                                                  best_t, best_idx);
                } else {
                    // Visit the nearer child first so best_t tightens early.
                    double ta, tb;
                    bool ha = slab_test(nodes_[node.first].box, op, ta);
                    bool hb = slab_test(nodes_[node.first + 1].box, op, tb);
                    if (ha && hb) {
                        if (ta <= tb) {
                            stack[top++] = node.first + 1;
                            stack[top++] = node.first;
                        } else {
                            stack[top++] = node.first;
                            stack[top++] = node.first + 1;
                        }
                    } else if (ha) {
                        stack[top++] = node.first;
                    } else if (hb) {
                        stack[top++] = node.first + 1;
                    }
                }
            }
        }
        return detail::finish_hit(*mesh_, op.v, best_t, best_idx);
    }

private:
    struct Node {
        BoundingBox box;
        std::uint32_t first = 0;  // child index or first triangle slot
        std::uint32_t count = 0;  // 0 for interior nodes
    };

    static bool slab_test(const BoundingBox& box, const OrientedPoint& op,
                          double& t_entry) {
        double t0 = 0.0, t1 = kInf;
        for (int a = 0; a < 3; ++a) {
            if (op.v[a] == 0.0) {
                if (op.p[a] < box.min[a] || op.p[a] > box.max[a]) return false;
                continue;
            }
            double inv = 1.0 / op.v[a];
            double lo = (box.min[a] - op.p[a]) * inv;
            double hi = (box.max[a] - op.p[a]) * inv;
            if (lo > hi) std::swap(lo, hi);
            t0 = std::max(t0, lo);
            t1 = std::min(t1, hi);
            if (t0 > t1) return false;
        }
        t_entry = t0;
        return true;
    }

    void build() {
        const std::size_t n = mesh_->triangle_count();
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0u);
        if (n == 0) return;
        tri_boxes_.resize(n);
        centroids_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = mesh_->triangles[i];
            BoundingBox b{{kInf, kInf, kInf}, {-kInf, -kInf, -kInf}};
            for (int k = 0; k < 3; ++k) {
                b.min = b.min.cwise_min(mesh_->vertices[t[k]]);
                b.max = b.max.cwise_max(mesh_->vertices[t[k]]);
            }
            tri_boxes_[i] = b;
            centroids_[i] = b.center();
        }
        nodes_.reserve(2 * n);
        nodes_.emplace_back();
        build_node(0, 0, static_cast<std::uint32_t>(n), 0);
        tri_boxes_.clear();
        centroids_.clear();
    }

    void build_node(std::uint32_t node_idx, std::uint32_t begin,
                    std::uint32_t count, int depth) {
        Node& node = nodes_[node_idx];
        BoundingBox box{{kInf, kInf, kInf}, {-kInf, -kInf, -kInf}};
        for (std::uint32_t k = 0; k < count; ++k) {
            const auto& tb = tri_boxes_[order_[begin + k]];
            box.min = box.min.cwise_min(tb.min);
            box.max = box.max.cwise_max(tb.max);
        }
        node.box = box;
        if (count <= 4 || depth >= 30) {
            node.first = begin;
            node.count = count;
            return;
        }
        Vec3 e = box.extent();
        int axis = e.x >= e.y && e.x >= e.z ? 0 : (e.y >= e.z ? 1 : 2);
        std::uint32_t mid = count / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + begin + mid,
                         order_.begin() + begin + count,
                         [&](std::uint32_t a, std::uint32_t b) {
                             double ca = centroids_[a][axis];
                             double cb = centroids_[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        std::uint32_t left = static_cast<std::uint32_t>(nodes_.size());
        node.first = left;
        node.count = 0;
        nodes_.emplace_back();
        nodes_.emplace_back();
        build_node(left, begin, mid, depth + 1);
        build_node(left + 1, begin + mid, count - mid, depth + 1);
    }

    const TriangleMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
    std::vector<BoundingBox> tri_boxes_;  // build scratch
    std::vector<Vec3> centroids_;         // build scratch
};

// ---------------------------------------------------------------------------
// Analytic shapes (closed-form oracle)

struct SphereShape {
    Vec3 center{0, 0, 0};
    double radius = 1.0;
};
struct PlaneShape {
    Vec3 point{0, 0, 0};
    UnitVec3 normal{0, 0, 1};
};
struct BoxShape {
    Vec3 min{-0.5, -0.5, -0.5};
    Vec3 max{0.5, 0.5, 0.5};
};

struct AnalyticShape {
    std::variant<SphereShape, PlaneShape, BoxShape> shape;

    static AnalyticShape sphere(const Vec3& c, double r) {
        if (r <= 0.0) throw std::invalid_argument("sphere radius must be positive");
        return {SphereShape{c, r}};
    }
    static AnalyticShape plane(const Vec3& point, const Vec3& normal) {
        return {PlaneShape{point, normal.normalized()}};
    }
    static AnalyticShape box(const Vec3& mn, const Vec3& mx) {
        return {BoxShape{mn, mx}};
    }
};

/// First intersection plus exact first/second derivatives of the depth, used
/// as ground truth for the property checks.
struct AnalyticJet {
    HitRecord hit;
    Vec3 grad_p_d{};   // dd/dp
    Vec3 grad_v_d{};   // dd/dv projected orthogonal to v
    Mat3 hess_p_d{};   // d^2 d / dp^2
};

namespace detail {

inline AnalyticJet sphere_jet(const SphereShape& s, const OrientedPoint& op) {
    AnalyticJet jet;
    const Vec3 pc = op.p - s.center;
    const double b = pc.dot(op.v);
    const double c = pc.squared_norm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return jet;
    const double sq = std::sqrt(disc);
    const double t_near = -b - sq;
    const double t_far = -b + sq;
    double t;
    bool near_root;
    if (t_near >= 0.0) {
        t = t_near;
        near_root = true;
    } else if (t_far >= 0.0) {
        t = t_far;
        near_root = false;
    } else {
        return jet;
    }
    jet.hit.visible = true;
    jet.hit.depth = t;
    Vec3 n = (pc + op.v * t) / s.radius;
    if (n.dot(op.v) > 0.0) n = -n;
    jet.hit.normal = n;

    if (sq > 1e-12) {
        const Vec3 w = op.v * b - pc;
        const double sign = near_root ? 1.0 : -1.0;
        jet.grad_p_d = -op.v - w * (sign / sq);
        Vec3 gv = pc * (-1.0 - sign * b / sq);
        // project out the component along v (depth is invariant to ||v||)
        jet.grad_v_d = gv - op.v * gv.dot(op.v);
        Mat3 ident = Mat3::identity();
        Mat3 vvT = Mat3::outer(op.v, op.v);
        Mat3 wwT = Mat3::outer(w, w);
        jet.hess_p_d = (ident - vvT) * (sign / sq) + wwT * (sign / (sq * sq * sq));
    } else {
        // Grazing tangent: derivatives blow up; leave them zero and let
        // callers treat the point as degenerate.
        jet.grad_p_d = Vec3{};
        jet.grad_v_d = Vec3{};
        jet.hess_p_d = Mat3::zero();
    }
    return jet;
}

inline AnalyticJet plane_jet(const PlaneShape& pl, const OrientedPoint& op) {
    AnalyticJet jet;
    const double denom = op.v.dot(pl.normal);
    if (std::abs(denom) < kDetEpsilon) return jet;
    const double t = (pl.point - op.p).dot(pl.normal) / denom;
    if (t < 0.0) return jet;
    jet.hit.visible = true;
    jet.hit.depth = t;
    Vec3 n = pl.normal;
    if (n.dot(op.v) > 0.0) n = -n;
    jet.hit.normal = n;
    jet.grad_p_d = pl.normal * (-1.0 / denom);
    Vec3 gv = pl.normal * (-t / denom);
    jet.grad_v_d = gv - op.v * gv.dot(op.v);
    jet.hess_p_d = Mat3::zero();
    return jet;
}

inline AnalyticJet box_jet(const BoxShape& bx, const OrientedPoint& op) {
    AnalyticJet jet;
    double t_enter = -kInf, t_exit = kInf;
    int axis_enter = -1, axis_exit = -1;
    double sign_enter = 0.0, sign_exit = 0.0;
    for (int a = 0; a < 3; ++a) {
        if (op.v[a] == 0.0) {
            if (op.p[a] < bx.min[a] || op.p[a] > bx.max[a]) return jet;
            continue;
        }
        double inv = 1.0 / op.v[a];
        double t0 = (bx.min[a] - op.p[a]) * inv;
        double t1 = (bx.max[a] - op.p[a]) * inv;
        double s0 = -1.0, s1 = 1.0;  // face normal sign along axis a
        if (t0 > t1) {
            std::swap(t0, t1);
            std::swap(s0, s1);
        }
        if (t0 > t_enter) {
            t_enter = t0;
            axis_enter = a;
            sign_enter = s0;
        }
        if (t1 < t_exit) {
            t_exit = t1;
            axis_exit = a;
            sign_exit = s1;
        }
    }
    if (t_enter > t_exit || t_exit < 0.0) return jet;
    double t;
    int axis;
    double nsign;
    if (t_enter >= 0.0) {
        t = t_enter;
        axis = axis_enter;
        nsign = sign_enter;
    } else {
        t = t_exit;
        axis = axis_exit;
        nsign = sign_exit;
    }
    if (axis < 0) return jet;
    jet.hit.visible = true;
    jet.hit.depth = t;
    Vec3 n{};
    n[axis] = nsign;
    if (n.dot(op.v) > 0.0) n = -n;
    jet.hit.normal = n;
    Vec3 g{};
    g[axis] = -1.0 / op.v[axis];
    jet.grad_p_d = g;
    Vec3 gv{};
    gv[axis] = -t / op.v[axis];
    jet.grad_v_d = gv - op.v * gv.dot(op.v);
    jet.hess_p_d = Mat3::zero();
    return jet;
}

}  // namespace detail

inline AnalyticJet analytic_ddf_jet(const AnalyticShape& shape,
                                    const OrientedPoint& op) {
    return std::visit(
        [&](const auto& s) -> AnalyticJet {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SphereShape>)
                return detail::sphere_jet(s, op);
            else if constexpr (std::is_same_v<T, PlaneShape>)
                return detail::plane_jet(s, op);
            else
                return detail::box_jet(s, op);
        },
        shape.shape);
}

/// Exact first-intersection record for an analytic shape.
inline HitRecord analytic_ddf_eval(const AnalyticShape& shape,
                                   const OrientedPoint& op) {
    return analytic_ddf_jet(shape, op).hit;
}

// ---------------------------------------------------------------------------
// Tangent frames and surface sampling

/// Orthonormal tangent pair for a unit normal, built by Gram-Schmidt on
/// Gaussian samples (resampling when nearly parallel).
inline std::pair<UnitVec3, UnitVec3> tangent_basis(const UnitVec3& n, Rng& rng) {
    Vec3 t1;
    for (;;) {
        Vec3 g = rng.normal3();
        t1 = g - n * g.dot(n);
        double len = t1.norm();
        if (len > 1e-6) {
            t1 = t1 / len;
            break;
        }
    }
    Vec3 t2;
    for (;;) {
        Vec3 g = rng.normal3();
        t2 = g - n * g.dot(n) - t1 * g.dot(t1);
        double len = t2.norm();
        if (len > 1e-6) {
            t2 = t2 / len;
            break;
        }
    }
    return {t1, t2};
}

struct SurfacePoint {
    Vec3 q;
    UnitVec3 n;
};

/// Area-weighted uniform sampling of mesh surface points.
inline std::vector<SurfacePoint> surface_sample(const TriangleMesh& mesh,
                                                std::size_t count, Rng& rng) {
    const double total = mesh.total_area();
    if (!(total > 0.0)) throw std::runtime_error("mesh has zero surface area");
    std::vector<double> cdf(mesh.tri_areas.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mesh.tri_areas.size(); ++i) {
        acc += mesh.tri_areas[i];
        cdf[i] = acc;
    }
    std::vector<SurfacePoint> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double r = rng.uniform01() * total;
        auto it = std::lower_bound(cdf.begin(), cdf.end(), r);
        std::size_t ti = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
        const auto& tri = mesh.triangles[ti];
        double u = rng.uniform01();
        double v = rng.uniform01();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        Vec3 q = mesh.vertices[tri[0]] * (1.0 - u - v) +
                 mesh.vertices[tri[1]] * u + mesh.vertices[tri[2]] * v;
        out.push_back({q, mesh.tri_normals[ti]});
    }
    return out;
}

}  // namespace pddf
