#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "pddf/core.hpp"

namespace pddf {

// All randomness in the library flows through this wrapper so that parallel
// callers can own independent, reproducible streams. Streams are derived by
// hashing (seed, tag) rather than by sharing one engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    static Rng derive(std::uint64_t seed, std::uint64_t tag) {
        // splitmix64 over the pair; decorrelates adjacent (seed, tag) values.
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    int uniform_int(int n) {  // in [0, n)
        return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
    }

    bool coin() { return (engine_() & 1u) != 0; }

    /// Standard normal via Box-Muller (no cached second value, so the stream
    /// position is a pure function of call count).
    double normal() {
        double u1 = uniform01(), u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec3 normal3() { return {normal(), normal(), normal()}; }

    /// Uniform on the unit sphere.
    UnitVec3 unit_vector() {
        for (;;) {
            Vec3 g = normal3();
            double n = g.norm();
            if (n > 1e-12) return g / n;
        }
    }

    Vec3 in_box(const BoundingBox& b) {
        return {uniform(b.min.x, b.max.x), uniform(b.min.y, b.max.y),
                uniform(b.min.z, b.max.z)};
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace pddf
