#pragma once
#include <cstdint>
#include <random>

namespace cycond {

using Rng = std::mt19937_64;

// splitmix64 round; used to derive independent streams from one user seed
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
    return Rng(mix64(mix64(seed) ^ mix64(stream + 0x51ed2700215408a5ull)));
}

inline double gauss(Rng& r) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(r);
}

inline double uniform(Rng& r, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(r);
}

// ±1 with equal probability
inline double rademacher(Rng& r) {
    return (r() & 1ull) ? 1.0 : -1.0;
}

} // namespace cycond
