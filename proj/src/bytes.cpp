#include "streamon/bytes.hpp"

#include <cstdio>

namespace streamon {

std::string to_hex(const Bytes& b) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(b.size() * 2);
    for (uint8_t v : b) {
        out.push_back(digits[v >> 4]);
        out.push_back(digits[v & 0xf]);
    }
    return out;
}

std::string best_effort_dotted(const Bytes& b) {
    char buf[64];
    if (b.size() == 4) {
        std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", b[0], b[1], b[2], b[3]);
        return buf;
    }
    if (b.size() == 8) {
        std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u|%u.%u.%u.%u", b[0], b[1], b[2], b[3], b[4],
                      b[5], b[6], b[7]);
        return buf;
    }
    return to_hex(b);
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace streamon
