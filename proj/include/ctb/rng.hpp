#pragma once

#include <cstdint>
#include <random>

namespace ctb {

/// splitmix64 scramble, used to derive independent seed streams from a
/// top-level seed plus structural tags (sample index, restart, mode...).
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <typename... Tags>
std::uint64_t mix_seed(std::uint64_t z, std::uint64_t tag, Tags... rest) {
    return mix_seed(mix_seed(z) ^ tag, rest...);
}

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(rng);
}

inline std::uint64_t poisson(Rng& rng, double mean) {
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(rng);
}

}  // namespace ctb
