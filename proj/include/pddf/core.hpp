#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>

namespace pddf {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    Vec3 normalized() const {
        double n = norm();
        if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
        return *this / n;
    }
    Vec3 cwise_min(const Vec3& o) const {
        return {std::fmin(x, o.x), std::fmin(y, o.y), std::fmin(z, o.z)};
    }
    Vec3 cwise_max(const Vec3& o) const {
        return {std::fmax(x, o.x), std::fmax(y, o.y), std::fmax(z, o.z)};
    }
    bool all_finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Direction vectors are kept unit-length by convention; this is the check used
// at API boundaries.
using UnitVec3 = Vec3;

inline bool is_unit(const Vec3& v, double tol = 1e-9) {
    return std::abs(v.norm() - 1.0) <= tol;
}

/// A field query: position inside the bounding volume plus a unit view direction.
struct OrientedPoint {
    Vec3 p;
    UnitVec3 v;

    OrientedPoint() = default;
    OrientedPoint(const Vec3& p_, const Vec3& v_) : p(p_), v(v_) {}
};

/// Axis-aligned bounding volume; the field domain defaults to [-1,1]^3.
struct BoundingBox {
    Vec3 min{-1.0, -1.0, -1.0};
    Vec3 max{1.0, 1.0, 1.0};

    bool contains(const Vec3& p, double tol = 0.0) const {
        return p.x >= min.x - tol && p.x <= max.x + tol &&
               p.y >= min.y - tol && p.y <= max.y + tol &&
               p.z >= min.z - tol && p.z <= max.z + tol;
    }
    Vec3 extent() const { return max - min; }
    Vec3 center() const { return (min + max) * 0.5; }
    double diagonal() const { return extent().norm(); }
};

/// Ground-truth answer for one oriented point: did the ray hit, and where.
/// depth/normal are meaningful only when visible.
struct HitRecord {
    bool visible = false;
    double depth = kInf;
    UnitVec3 normal{0.0, 0.0, 0.0};
    std::optional<std::uint32_t> triangle_index;

    static HitRecord miss() { return HitRecord{}; }
};

}  // namespace pddf
