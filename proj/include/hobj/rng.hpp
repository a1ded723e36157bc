#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hobj {

/// SplitMix64 generator (Steele, Lea, Flood 2014).
///
/// state += 0x9E3779B97F4A7C15
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// return z ^ (z >> 31)
///
/// Uniform doubles take the top 53 bits: (next() >> 11) * 2^-53. Normals use
/// Box-Muller with the cosine branch only, so every normal consumes exactly two
/// uniforms. All distributions are defined here, never through <random>, so
/// sequences are identical across standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    std::uint64_t next() noexcept
    {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

    double normal() noexcept
    {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent stream for (seed, index); used to make per-sample generation order-free.
    static SplitMix64 stream(std::uint64_t seed, std::uint64_t index) noexcept
    {
        SplitMix64 mixer(seed ^ (index * 0xD1B54A32D192ED03ULL));
        return SplitMix64(mixer.next());
    }

private:
    std::uint64_t state_;
};

} // namespace hobj
