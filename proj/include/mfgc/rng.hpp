#pragma once

#include <cmath>
#include <cstdint>

namespace mfgc {

/**
 * Deterministic splittable RNG (splitmix64 core).
 *
 * Stream splitting: the stream for particle j under seed s is seeded with
 * mix(s, j), so a particle's entire noise sequence depends only on (s, j).
 * Simulating any subset of particles, in any order or partition, reproduces
 * the same per-particle trajectories bit for bit.
 */
class SplitRng {
public:
    explicit SplitRng(std::uint64_t seed) : state_(seed) {}

    SplitRng(std::uint64_t seed, std::uint64_t stream)
        : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL, stream)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in (0, 1); never returns 0 (log-safe).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
    }

    /// Uniform double in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_uniform();
    }

    /// Standard normal via Box-Muller; one value per call, pair cached.
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace mfgc
