#pragma once

#include <cstdint>
#include <vector>

#include "streamon/bytes.hpp"

namespace streamon {

// Parameters of a seeded k-of-m hash family shared by all sketch structures.
struct HashConfig {
    uint32_t k = 4;        // number of cells touched per key
    uint32_t m = 1 << 16;  // cells per array
    uint64_t seed = 0;     // distinguishes independent instances
};

// One seeded 64-bit mixing hash over arbitrary bytes.
uint64_t hash64(const void* data, size_t len, uint64_t seed);

inline uint64_t hash64(const Bytes& b, uint64_t seed) {
    return hash64(b.data(), b.size(), seed);
}

// The k cell indices a key maps to, each in [0, m).
//
// Two independent 64-bit hashes h1, h2 are combined as h1 + i*h2 (classic
// double hashing); this preserves Bloom-filter error behaviour while costing
// two hash evaluations regardless of k.
void hash_indices(const HashConfig& cfg, const void* data, size_t len,
                  std::vector<uint32_t>& out);

inline void hash_indices(const HashConfig& cfg, const Bytes& key, std::vector<uint32_t>& out) {
    hash_indices(cfg, key.data(), key.size(), out);
}

inline std::vector<uint32_t> hash_indices(const HashConfig& cfg, const Bytes& key) {
    std::vector<uint32_t> v;
    hash_indices(cfg, key, v);
    return v;
}

}  // namespace streamon
