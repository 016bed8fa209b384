#pragma once

#include <cstdint>
#include <random>

namespace cdasim {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename Int>
Int uniform_int(Rng& rng, Int lo, Int hi) {
    return std::uniform_int_distribution<Int>(lo, hi)(rng);
}

}  // namespace cdasim
