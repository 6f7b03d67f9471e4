#include "streamon/hash.hpp"

#include <cstring>

namespace streamon {

namespace {

inline uint64_t rotl64(uint64_t x, int r) { return (x << r) | (x >> (64 - r)); }

inline uint64_t fmix64(uint64_t k) {
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdull;
    k ^= k >> 33;
    k *= 0xc4ceb9fe1a85ec53ull;
    k ^= k >> 33;
    return k;
}

inline uint64_t load_u64(const uint8_t* p) {
    uint64_t v;
    std::memcpy(&v, p, 8);
    return v;
}

}  // namespace

// 64-bit half of MurmurHash3's x64 variant, seeded. Keys here are short
// (flow keys of a few dozen bytes), so mixing quality matters more than
// long-message throughput.
uint64_t hash64(const void* data, size_t len, uint64_t seed) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    const uint64_t c1 = 0x87c37b91114253d5ull;
    const uint64_t c2 = 0x4cf5ad432745937full;
    uint64_t h = seed ^ (static_cast<uint64_t>(len) * c1);

    size_t n = len;
    while (n >= 8) {
        uint64_t k = load_u64(p);
        k *= c1;
        k = rotl64(k, 31);
        k *= c2;
        h ^= k;
        h = rotl64(h, 27);
        h = h * 5 + 0x52dce729;
        p += 8;
        n -= 8;
    }

    uint64_t tail = 0;
    for (size_t i = 0; i < n; ++i) tail |= static_cast<uint64_t>(p[i]) << (8 * i);
    if (n > 0) {
        tail *= c1;
        tail = rotl64(tail, 31);
        tail *= c2;
        h ^= tail;
    }

    h ^= static_cast<uint64_t>(len);
    return fmix64(h);
}

void hash_indices(const HashConfig& cfg, const void* data, size_t len,
                  std::vector<uint32_t>& out) {
    uint64_t h1 = hash64(data, len, cfg.seed);
    uint64_t h2 = hash64(data, len, cfg.seed ^ 0x5bd1e9955bd1e995ull);
    // h2 must be odd so successive probes cannot collapse onto one cell
    // when m is a power of two.
    h2 |= 1;
    out.resize(cfg.k);
    for (uint32_t i = 0; i < cfg.k; ++i) {
        out[i] = static_cast<uint32_t>((h1 + static_cast<uint64_t>(i) * h2) % cfg.m);
    }
}

}  // namespace streamon
