#include "streamon/packet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <mutex>
#include <unordered_map>
#include <utility>

namespace streamon {

namespace {

struct FieldName {
    const char* name;
    FieldId id;
};

constexpr FieldName kFieldNames[] = {
    {"ip.src", FieldId::IpSrc},
    {"ip.dst", FieldId::IpDst},
    {"ip.proto", FieldId::IpProto},
    {"ip.len", FieldId::IpLen},
    {"tcp.sport", FieldId::TcpSport},
    {"tcp.dport", FieldId::TcpDport},
    {"tcp.flags", FieldId::TcpFlags},
    {"tcp.seq", FieldId::TcpSeq},
    {"udp.sport", FieldId::UdpSport},
    {"udp.dport", FieldId::UdpDport},
    {"dns.qname", FieldId::DnsQname},
    {"dns.qtype", FieldId::DnsQtype},
    {"dns.rcode", FieldId::DnsRcode},
    {"dns.ancount", FieldId::DnsAncount},
    {"pkt.len", FieldId::PktLen},
    {"pkt.payload_len", FieldId::PktPayloadLen},
    {"pkt.ts", FieldId::PktTs},
    {"pkt.popcount", FieldId::PktPopcount},
    {"pkt.printable", FieldId::PktPrintable},
    {"pkt.entropy", FieldId::PktEntropy},
    {"pkt.entropy_hu", FieldId::PktEntropyHu},
    {"pkt.entropy_sigma", FieldId::PktEntropySigma},
};

inline uint16_t rd_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] << 8 | p[1]); }

inline uint32_t rd_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}

// Parses the first question name starting at off. Compression pointers are
// followed (bounded, to stop pointer loops); labels are lower-cased. Returns
// the offset just past the name as encountered in-line, or 0 on error.
size_t parse_dns_name(const uint8_t* msg, size_t len, size_t off, std::string& out) {
    out.clear();
    size_t pos = off;
    size_t next = 0;  // where the in-line encoding ends; set at first pointer
    int jumps = 0;
    while (true) {
        if (pos >= len) return 0;
        uint8_t tag = msg[pos];
        if (tag == 0) {
            if (next == 0) next = pos + 1;
            return next;
        }
        if ((tag & 0xc0) == 0xc0) {
            if (pos + 1 >= len || ++jumps > 8) return 0;
            if (next == 0) next = pos + 2;
            pos = static_cast<size_t>((tag & 0x3f) << 8 | msg[pos + 1]);
            continue;
        }
        if ((tag & 0xc0) != 0) return 0;  // reserved label types
        size_t label_len = tag;
        if (pos + 1 + label_len > len) return 0;
        if (!out.empty()) out.push_back('.');
        for (size_t i = 0; i < label_len; ++i) {
            char c = static_cast<char>(msg[pos + 1 + i]);
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            out.push_back(c);
        }
        pos += 1 + label_len;
    }
}

void parse_dns(PacketView& pkt) {
    const uint8_t* p = pkt.payload;
    uint32_t len = pkt.payload_len;
    if (len < 12) return;
    uint16_t flags = rd_u16(p + 2);
    uint16_t qdcount = rd_u16(p + 4);
    pkt.dns_rcode = static_cast<uint8_t>(flags & 0x0f);
    pkt.dns_ancount = rd_u16(p + 6);
    if (qdcount >= 1) {
        std::string name;
        size_t after = parse_dns_name(p, len, 12, name);
        if (after == 0 || after + 4 > len) return;  // question truncated
        pkt.dns_qname = std::move(name);
        pkt.dns_qtype = rd_u16(p + after);
    }
    pkt.has_dns = true;
}

// Binary entropy of a bit probability, in bits; h(0) = h(1) = 0.
double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

// Entropy deficit 1 - h(p), evaluated via log1p around p = 1/2 so values
// of order 1e-10 keep full precision (the naive 1 - h cancels).
double entropy_deficit(double p) {
    if (p <= 0.0 || p >= 1.0) return 1.0;
    double x = 2.0 * p - 1.0;
    return (p * std::log1p(x) + (1.0 - p) * std::log1p(-x)) / std::log(2.0);
}

UniformEntropyStats compute_uniform_entropy(size_t payload_len) {
    UniformEntropyStats out;
    if (payload_len == 0) return out;
    const double n = static_cast<double>(payload_len) * 8.0;
    if (n <= 65536.0) {
        // Exact moments over K ~ Binomial(n, 1/2); weights via log-gamma so
        // n choose k never overflows. The statistics are accumulated on the
        // deficit g = 1 - h, which is small, so the variance never suffers
        // the catastrophic cancellation of E[h^2] - E[h]^2 near h = 1.
        const uint64_t ni = static_cast<uint64_t>(n);
        const double log_norm = std::lgamma(n + 1.0) - n * std::log(2.0);
        double wsum = 0.0, g1 = 0.0, g2 = 0.0;
        for (uint64_t k = 0; k <= ni; ++k) {
            double kk = static_cast<double>(k);
            double w = std::exp(log_norm - std::lgamma(kk + 1.0) - std::lgamma(n - kk + 1.0));
            double g = entropy_deficit(kk / n);
            wsum += w;
            g1 += w * g;
            g2 += w * g * g;
        }
        g1 /= wsum;
        g2 /= wsum;
        out.mean = 1.0 - g1;
        out.sigma = std::sqrt(std::max(0.0, g2 - g1 * g1));
    } else {
        // Delta-method normal approximation around p = 1/2, where the first
        // derivative of h vanishes: E[h] ~ 1 - 1/(2 n ln 2) and
        // sd[h] ~ 1/(sqrt(2) n ln 2).
        const double ln2 = std::log(2.0);
        out.mean = 1.0 - 1.0 / (2.0 * n * ln2);
        out.sigma = 1.0 / (std::sqrt(2.0) * n * ln2);
    }
    return out;
}

const PayloadStats& stats_of(const PacketView& pkt) {
    if (!pkt.stats_cache) pkt.stats_cache = payload_stats(pkt.payload, pkt.payload_len);
    return *pkt.stats_cache;
}

}  // namespace

std::optional<FieldId> field_from_name(const std::string& name) {
    for (const auto& f : kFieldNames) {
        if (name == f.name) return f.id;
    }
    return std::nullopt;
}

const char* field_name(FieldId id) {
    for (const auto& f : kFieldNames) {
        if (f.id == id) return f.name;
    }
    return "?";
}

bool field_keyable(FieldId id) {
    switch (id) {
        case FieldId::PktTs:
        case FieldId::PktPopcount:
        case FieldId::PktPrintable:
        case FieldId::PktEntropy:
        case FieldId::PktEntropyHu:
        case FieldId::PktEntropySigma:
            return false;
        default:
            return true;
    }
}

PayloadStats payload_stats(const uint8_t* data, size_t len) {
    PayloadStats out;
    if (len == 0) return out;
    uint64_t ones = 0;
    uint64_t printable = 0;
    for (size_t i = 0; i < len; ++i) {
        ones += static_cast<uint64_t>(std::popcount(data[i]));
        if (data[i] >= 32 && data[i] <= 127) ++printable;
    }
    const double bits = static_cast<double>(len) * 8.0;
    out.popcount = static_cast<double>(ones) / bits;
    out.printable = static_cast<double>(printable) / static_cast<double>(len);
    out.entropy = binary_entropy(out.popcount);
    return out;
}

UniformEntropyStats uniform_entropy_stats(size_t payload_len) {
    // Computation stays under the lock: lgamma touches a process-wide sign
    // flag on common libms, and each length is computed once anyway.
    static std::mutex mu;
    static std::unordered_map<size_t, UniformEntropyStats> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(payload_len);
    if (it != cache.end()) return it->second;
    UniformEntropyStats st = compute_uniform_entropy(payload_len);
    cache.emplace(payload_len, st);
    return st;
}

std::optional<PacketView> dissect(const uint8_t* frame, uint32_t len, double ts) {
    if (frame == nullptr || len < 14) return std::nullopt;
    PacketView pkt;
    pkt.ts = ts;
    pkt.frame = frame;
    pkt.frame_len = len;

    uint32_t off = 12;
    uint16_t ethertype = rd_u16(frame + off);
    off += 2;
    if (ethertype == 0x8100) {  // single 802.1Q tag
        if (len < off + 4) return pkt;
        ethertype = rd_u16(frame + off + 2);
        off += 4;
    }
    if (ethertype != 0x0800) return pkt;  // not IPv4: link-layer view only

    // --- IPv4 ---
    if (len < off + 20) return pkt;
    const uint8_t* ip = frame + off;
    if ((ip[0] >> 4) != 4) return pkt;
    uint32_t ihl = static_cast<uint32_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || len < off + ihl) return pkt;
    uint16_t total_len = rd_u16(ip + 2);
    if (total_len < ihl) return pkt;
    pkt.has_ip = true;
    pkt.ip_len = total_len;
    pkt.ip_proto = ip[9];
    pkt.ip_src = rd_u32(ip + 12);
    pkt.ip_dst = rd_u32(ip + 16);

    uint32_t ip_payload_off = off + ihl;
    uint32_t ip_end = off + std::min<uint32_t>(total_len, len - off);
    if (ip_payload_off >= ip_end) return pkt;
    const uint8_t* l4 = frame + ip_payload_off;
    uint32_t l4_len = ip_end - ip_payload_off;
    pkt.payload = l4;
    pkt.payload_len = l4_len;

    uint16_t frag = rd_u16(ip + 6);
    if ((frag & 0x1fff) != 0) return pkt;  // non-first fragment: no L4 header

    if (pkt.ip_proto == 6 && l4_len >= 20) {  // --- TCP ---
        uint32_t doff = static_cast<uint32_t>(l4[12] >> 4) * 4;
        if (doff < 20 || doff > l4_len) return pkt;
        pkt.has_tcp = true;
        pkt.sport = rd_u16(l4);
        pkt.dport = rd_u16(l4 + 2);
        pkt.tcp_seq = rd_u32(l4 + 4);
        pkt.tcp_flags = l4[13];
        pkt.payload = l4 + doff;
        pkt.payload_len = l4_len - doff;
    } else if (pkt.ip_proto == 17 && l4_len >= 8) {  // --- UDP ---
        pkt.has_udp = true;
        pkt.sport = rd_u16(l4);
        pkt.dport = rd_u16(l4 + 2);
        uint16_t udp_len = rd_u16(l4 + 4);
        uint32_t data_len = (udp_len >= 8) ? udp_len - 8u : 0u;
        pkt.payload = l4 + 8;
        pkt.payload_len = std::min<uint32_t>(data_len, l4_len - 8);
        if (pkt.sport == 53 || pkt.dport == 53) parse_dns(pkt);
    }
    return pkt;
}

std::optional<double> field_value(const PacketView& pkt, FieldId id) {
    switch (id) {
        case FieldId::IpSrc:
            if (!pkt.has_ip) return std::nullopt;
            return static_cast<double>(pkt.ip_src);
        case FieldId::IpDst:
            if (!pkt.has_ip) return std::nullopt;
            return static_cast<double>(pkt.ip_dst);
        case FieldId::IpProto:
            if (!pkt.has_ip) return std::nullopt;
            return static_cast<double>(pkt.ip_proto);
        case FieldId::IpLen:
            if (!pkt.has_ip) return std::nullopt;
            return static_cast<double>(pkt.ip_len);
        case FieldId::TcpSport:
            if (!pkt.has_tcp) return std::nullopt;
            return static_cast<double>(pkt.sport);
        case FieldId::TcpDport:
            if (!pkt.has_tcp) return std::nullopt;
            return static_cast<double>(pkt.dport);
        case FieldId::TcpFlags:
            if (!pkt.has_tcp) return std::nullopt;
            return static_cast<double>(pkt.tcp_flags);
        case FieldId::TcpSeq:
            if (!pkt.has_tcp) return std::nullopt;
            return static_cast<double>(pkt.tcp_seq);
        case FieldId::UdpSport:
            if (!pkt.has_udp) return std::nullopt;
            return static_cast<double>(pkt.sport);
        case FieldId::UdpDport:
            if (!pkt.has_udp) return std::nullopt;
            return static_cast<double>(pkt.dport);
        case FieldId::DnsQname:
            return std::nullopt;  // no numeric form
        case FieldId::DnsQtype:
            if (!pkt.has_dns) return std::nullopt;
            return static_cast<double>(pkt.dns_qtype);
        case FieldId::DnsRcode:
            if (!pkt.has_dns) return std::nullopt;
            return static_cast<double>(pkt.dns_rcode);
        case FieldId::DnsAncount:
            if (!pkt.has_dns) return std::nullopt;
            return static_cast<double>(pkt.dns_ancount);
        case FieldId::PktLen:
            return static_cast<double>(pkt.frame_len);
        case FieldId::PktPayloadLen:
            return static_cast<double>(pkt.payload_len);
        case FieldId::PktTs:
            return pkt.ts;
        case FieldId::PktPopcount:
            return stats_of(pkt).popcount;
        case FieldId::PktPrintable:
            return stats_of(pkt).printable;
        case FieldId::PktEntropy:
            return stats_of(pkt).entropy;
        case FieldId::PktEntropyHu:
            return uniform_entropy_stats(pkt.payload_len).mean;
        case FieldId::PktEntropySigma:
            return uniform_entropy_stats(pkt.payload_len).sigma;
    }
    return std::nullopt;
}

bool append_field_bytes(const PacketView& pkt, FieldId id, Bytes& out) {
    switch (id) {
        case FieldId::IpSrc:
            if (!pkt.has_ip) return false;
            append_u32be(out, pkt.ip_src);
            return true;
        case FieldId::IpDst:
            if (!pkt.has_ip) return false;
            append_u32be(out, pkt.ip_dst);
            return true;
        case FieldId::IpProto:
            if (!pkt.has_ip) return false;
            append_u8(out, pkt.ip_proto);
            return true;
        case FieldId::IpLen:
            if (!pkt.has_ip) return false;
            append_u16be(out, pkt.ip_len);
            return true;
        case FieldId::TcpSport:
            if (!pkt.has_tcp) return false;
            append_u16be(out, pkt.sport);
            return true;
        case FieldId::TcpDport:
            if (!pkt.has_tcp) return false;
            append_u16be(out, pkt.dport);
            return true;
        case FieldId::TcpFlags:
            if (!pkt.has_tcp) return false;
            append_u8(out, pkt.tcp_flags);
            return true;
        case FieldId::TcpSeq:
            if (!pkt.has_tcp) return false;
            append_u32be(out, pkt.tcp_seq);
            return true;
        case FieldId::UdpSport:
            if (!pkt.has_udp) return false;
            append_u16be(out, pkt.sport);
            return true;
        case FieldId::UdpDport:
            if (!pkt.has_udp) return false;
            append_u16be(out, pkt.dport);
            return true;
        case FieldId::DnsQname: {
            if (!pkt.has_dns) return false;
            append_u16be(out, static_cast<uint16_t>(pkt.dns_qname.size()));
            out.insert(out.end(), pkt.dns_qname.begin(), pkt.dns_qname.end());
            return true;
        }
        case FieldId::DnsQtype:
            if (!pkt.has_dns) return false;
            append_u16be(out, pkt.dns_qtype);
            return true;
        case FieldId::DnsRcode:
            if (!pkt.has_dns) return false;
            append_u8(out, pkt.dns_rcode);
            return true;
        case FieldId::DnsAncount:
            if (!pkt.has_dns) return false;
            append_u16be(out, pkt.dns_ancount);
            return true;
        case FieldId::PktLen:
            append_u32be(out, pkt.frame_len);
            return true;
        case FieldId::PktPayloadLen:
            append_u32be(out, pkt.payload_len);
            return true;
        default:
            return false;  // timestamp and derived statistics are not keyable
    }
}

std::optional<Bytes> compose_flowkey(const PacketView& pkt,
                                     const std::vector<FieldId>& fields) {
    Bytes key;
    for (FieldId id : fields) {
        if (!append_field_bytes(pkt, id, key)) return std::nullopt;
    }
    return key;
}

}  // namespace streamon
