#pragma once

// Counter-based splittable random generator. Every draw is a pure function of
// (seed, stream, index), so replications can run in any order or in parallel
// and still reproduce bit-for-bit.

#include <cstdint>

#include "ratercap/common.hpp"

namespace ratercap {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x5851f42d4c957f2dULL)) {}

    // Uniform draw in the open interval (0,1).
    double uniform(std::uint64_t stream, std::uint64_t index) const {
        std::uint64_t h = splitmix64(splitmix64(key_ ^ (stream * 0x9e3779b97f4a7c15ULL)) + index);
        return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal draw via the inverse cdf; exact function of the counter.
    double normal(std::uint64_t stream, std::uint64_t index) const {
        return normal_quantile(uniform(stream, index));
    }

    bool bernoulli(double p, std::uint64_t stream, std::uint64_t index) const {
        return uniform(stream, index) < p;
    }

    std::uint64_t integer(std::uint64_t stream, std::uint64_t index) const {
        return splitmix64(splitmix64(key_ ^ (stream * 0x9e3779b97f4a7c15ULL)) + index);
    }

  private:
    std::uint64_t key_;
};

// Conventional stream labels used by the simulation module.
namespace rng_stream {
inline constexpr std::uint64_t theta = 1;
inline constexpr std::uint64_t response = 2;
inline constexpr std::uint64_t assignment = 3;
inline constexpr std::uint64_t mc = 4;
}  // namespace rng_stream

}  // namespace ratercap
