#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "rkfac/matrix.hpp"

namespace rkfac {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based random stream: each draw is a pure function of
/// (seed, counter), so replaying a seed replays the sequence bit-for-bit
/// and substreams can be split without sharing state.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;

    explicit RngState(std::uint64_t s = 0) : seed(s) {}

    /// Independent substream keyed by (step, layer) or similar tags.
    RngState substream(std::uint64_t a, std::uint64_t b = 0) const {
        const std::uint64_t mixed =
            detail::splitmix64(seed ^ detail::splitmix64(a ^ detail::splitmix64(b)));
        return RngState(mixed);
    }

    std::uint64_t next_u64() {
        return detail::splitmix64(seed ^ detail::splitmix64(counter++));
    }

    /// Uniform in (0, 1]; never returns 0 so log() below is safe.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double next_uniform_signed() { return 2.0 * next_uniform() - 1.0; }

    /// Standard normal via Box-Muller (one value per uniform pair; the
    /// discarded sine partner keeps the stream stateless beyond counter).
    double next_gaussian() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
};

/// m x n matrix of i.i.d. standard-normal draws; advances rng.
inline DenseMatrix sample_gaussian(RngState& rng, std::size_t m, std::size_t n) {
    DenseMatrix x(m, n);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.next_gaussian();
    return x;
}

}  // namespace rkfac
