#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace streamon {

// Deterministic random helpers for trace generation and tests.
//
// Raw mt19937_64 draws are reproducible everywhere, but the std::*_distribution
// adapters are not (their algorithms are implementation-defined), so every
// derived quantity here is built from raw 64-bit draws only.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Unbiased-enough integer in [0, n) via 128-bit multiply-shift.
    // The modulo bias of the plain multiply is < 2^-64 * n, irrelevant here.
    uint64_t uniform(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Integer in [lo, hi] inclusive.
    uint64_t range(uint64_t lo, uint64_t hi) { return lo + uniform(hi - lo + 1); }

    // Double in [0, 1) with 53 bits of precision.
    double uniform_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Exponential inter-arrival with given mean; used for background noise.
    double exponential(double mean) {
        double u = uniform_double();
        // Avoid log(0); the probability of hitting it is 2^-53 anyway.
        if (u <= 0.0) u = 0x1.0p-53;
        return -mean * std::log(u);
    }

    uint8_t byte() { return static_cast<uint8_t>(uniform(256)); }

private:
    std::mt19937_64 gen_;
};

// splitmix64, used to derive independent sub-seeds from one master seed so
// that adding a traffic source to a scenario does not shift every other
// source's draws.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    uint64_t st = s;
    return splitmix64(st);
}

}  // namespace streamon
