// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace krisk {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

/// One SplitMix64 step: advance `x` by the golden gamma and apply the output mix.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    std::uint64_t z = x + kGoldenGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Seed for draw `draw` of distribution `dist` applied to sample `sample`.
/// Independent of scheduling, so parallel population is reproducible.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t dist,
                                                  std::uint64_t draw,
                                                  std::uint64_t sample) noexcept {
    std::uint64_t s = splitmix64(master ^ (dist * kGoldenGamma));
    s = splitmix64(s ^ (draw * kGoldenGamma));
    return splitmix64(s ^ (sample * kGoldenGamma));
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator, but all
/// distribution sampling goes through the members below so results are
/// identical across standard libraries.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr result_type operator()() noexcept {
        const std::uint64_t out = splitmix64(state_);
        state_ += kGoldenGamma;
        return out;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be positive. Uses rejection to avoid bias.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v = (*this)();
        while (v >= limit) v = (*this)();
        return v % n;
    }

    /// Standard normal via Box-Muller (cosine branch only, two uniforms per draw).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace krisk
