#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace streamon {

// Key material and packet field values are opaque byte strings.
using Bytes = std::vector<uint8_t>;

inline void append_u8(Bytes& b, uint8_t v) { b.push_back(v); }

inline void append_u16be(Bytes& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v >> 8));
    b.push_back(static_cast<uint8_t>(v));
}

inline void append_u32be(Bytes& b, uint32_t v) {
    b.push_back(static_cast<uint8_t>(v >> 24));
    b.push_back(static_cast<uint8_t>(v >> 16));
    b.push_back(static_cast<uint8_t>(v >> 8));
    b.push_back(static_cast<uint8_t>(v));
}

std::string to_hex(const Bytes& b);

// Renders a 4-byte key as dotted IPv4, an 8-byte key as a dotted pair.
// Anything else falls back to hex. Used for human-readable alert output.
std::string best_effort_dotted(const Bytes& b);

// FNV-1a over arbitrary bytes. Used for stream digests in fixtures, not
// for sketch cell placement (see hash.hpp for the seeded family).
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);

inline uint64_t fnv1a64(const Bytes& b, uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(b.data(), b.size(), seed);
}

struct BytesHash {
    size_t operator()(const Bytes& b) const { return static_cast<size_t>(fnv1a64(b)); }
};

}  // namespace streamon
