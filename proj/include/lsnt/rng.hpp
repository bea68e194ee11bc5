#pragma once

#include <cmath>
#include <cstdint>

namespace lsnt {

/// Deterministic 64-bit generator (splitmix64 state advance).
/// The same seed yields the same stream on every platform: uniform doubles
/// come from the top 53 bits, Gaussians from Box-Muller on two consecutive
/// uniforms (cosine branch only, no caching).
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal draw; consumes exactly two uniforms.
    double next_gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;  // keep log finite
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

private:
    std::uint64_t state_;
};

}  // namespace lsnt
