#pragma once

#include <cstdint>
#include <limits>

namespace masolab {

/// Counter-based 64-bit generator: the n-th draw is a pure function of
/// (seed, n), mixed with the SplitMix64 finalizer. Satisfies
/// UniformRandomBitGenerator, but the helper distributions below are used
/// everywhere instead of <random> distributions so that sequences are identical
/// across standard libraries.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed, std::uint64_t counter = 0) noexcept
        : seed_(seed), counter_(counter) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return at(counter_++); }

    /// Draw number `n` without advancing the counter.
    result_type at(std::uint64_t n) const noexcept {
        std::uint64_t z = seed_ + (n + 1) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Independent stream derived from this generator's seed.
    CounterRng split(std::uint64_t stream) const noexcept {
        return CounterRng(CounterRng(seed_ ^ 0xD1B54A32D192ED03ULL).at(stream));
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (one draw per call, no cached state).
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace masolab
