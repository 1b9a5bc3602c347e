#include "masolab/rng.hpp"

#include <cmath>
#include <numbers>

namespace masolab {

std::uint64_t CounterRng::below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    // Rejection sampling keeps the result exactly uniform.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v = (*this)();
    while (v >= limit) v = (*this)();
    return v % n;
}

double CounterRng::normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace masolab
