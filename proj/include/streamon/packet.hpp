#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "streamon/bytes.hpp"

namespace streamon {

// Every packet attribute a program can reference, either inside expressions
// or as a component of a flow key.
enum class FieldId {
    IpSrc,
    IpDst,
    IpProto,
    IpLen,
    TcpSport,
    TcpDport,
    TcpFlags,
    TcpSeq,
    UdpSport,
    UdpDport,
    DnsQname,
    DnsQtype,
    DnsRcode,
    DnsAncount,
    PktLen,
    PktPayloadLen,
    PktTs,
    // Derived payload statistics, usable in expressions only.
    PktPopcount,
    PktPrintable,
    PktEntropy,
    PktEntropyHu,
    PktEntropySigma,
};

std::optional<FieldId> field_from_name(const std::string& name);
const char* field_name(FieldId id);

// True for fields with a fixed byte encoding that may appear in flow keys
// (everything except the timestamp and the derived payload statistics).
bool field_keyable(FieldId id);

// Aggregate statistics over the payload byte string.
struct PayloadStats {
    double popcount = 0.0;   // fraction of payload bits set
    double printable = 0.0;  // fraction of bytes in the printable range 32..127
    double entropy = 0.0;    // per-bit binary entropy, in [0, 1]
};

PayloadStats payload_stats(const uint8_t* data, size_t len);

// Mean and standard deviation of the per-bit entropy of a uniformly random
// payload of the given length. Used to express "looks random" as a z-score
// band instead of a hard-coded cut-off. Exact binomial sum up to 64 Kbit
// payloads, normal approximation beyond; results are memoised per length.
struct UniformEntropyStats {
    double mean = 0.0;
    double sigma = 0.0;
};

UniformEntropyStats uniform_entropy_stats(size_t payload_len);

// One dissected frame. Layer presence flags say which fields are valid;
// pointers alias the caller's frame buffer and carry no ownership.
struct PacketView {
    double ts = 0.0;
    const uint8_t* frame = nullptr;
    uint32_t frame_len = 0;

    bool has_ip = false;
    uint32_t ip_src = 0;
    uint32_t ip_dst = 0;
    uint8_t ip_proto = 0;
    uint16_t ip_len = 0;

    bool has_tcp = false;
    bool has_udp = false;
    uint16_t sport = 0;
    uint16_t dport = 0;
    uint8_t tcp_flags = 0;
    uint32_t tcp_seq = 0;

    const uint8_t* payload = nullptr;
    uint32_t payload_len = 0;

    bool has_dns = false;
    uint16_t dns_qtype = 0;
    uint8_t dns_rcode = 0;
    uint16_t dns_ancount = 0;
    std::string dns_qname;  // lower-case, dot-separated, no trailing dot

    // Filled on first use by field_value(); derived stats are shared by
    // several pseudo-fields so they are computed at most once per packet.
    mutable std::optional<PayloadStats> stats_cache;
};

// Parses an Ethernet frame (one optional 802.1Q tag) into a PacketView.
// Returns nullopt only for frames too mangled to describe at all; an
// unknown ethertype or a truncated upper layer yields a view with the
// corresponding presence flags off.
std::optional<PacketView> dissect(const uint8_t* frame, uint32_t len, double ts);

// Numeric value of a field for expression evaluation; nullopt when the field
// is absent from this packet or has no numeric form (dns.qname).
std::optional<double> field_value(const PacketView& pkt, FieldId id);

// Appends the fixed byte encoding of a field to a flow key under
// construction. Variable-length fields are prefixed with a 16-bit length so
// concatenated keys cannot alias each other. Returns false when the field is
// absent or not keyable.
bool append_field_bytes(const PacketView& pkt, FieldId id, Bytes& out);

// Concatenates the encodings of all fields, in order, into one flow key.
std::optional<Bytes> compose_flowkey(const PacketView& pkt, const std::vector<FieldId>& fields);

}  // namespace streamon
