#pragma once

#include <cstdint>
#include <random>

namespace uvweave {

// std::mt19937_64's output sequence is fixed by the standard; the std
// distributions are not, so the conversions below are done by hand to keep
// generated data identical across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

inline std::uint64_t uniform_index(Rng& g, std::uint64_t n) {
    return n == 0 ? 0 : static_cast<std::uint64_t>(uniform01(g) * static_cast<double>(n)) % n;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace uvweave
