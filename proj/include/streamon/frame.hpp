#pragma once

#include <cstdint>
#include <string>

#include "streamon/bytes.hpp"

namespace streamon {

// Builders for well-formed Ethernet/IPv4 frames with correct IP and L4
// checksums. Shared by the trace generators and the dissector tests.

constexpr uint8_t kTcpFin = 0x01;
constexpr uint8_t kTcpSyn = 0x02;
constexpr uint8_t kTcpRst = 0x04;
constexpr uint8_t kTcpPsh = 0x08;
constexpr uint8_t kTcpAck = 0x10;

// Convenience for dotted-quad literals in scenarios and tests.
uint32_t ipv4(uint8_t a, uint8_t b, uint8_t c, uint8_t d);

Bytes make_udp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t dport,
                     const Bytes& payload);

Bytes make_tcp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t dport,
                     uint8_t flags, uint32_t seq, const Bytes& payload);

// UDP query to port 53 carrying one question.
Bytes make_dns_query(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t txid,
                     const std::string& qname, uint16_t qtype);

// UDP response from port 53: echoes the question and carries `answers`
// address records (rcode 0) or none (e.g. rcode 3 for NXDOMAIN).
Bytes make_dns_response(uint32_t src_ip, uint32_t dst_ip, uint16_t dport, uint16_t txid,
                        const std::string& qname, uint16_t qtype, uint8_t rcode,
                        uint16_t answers);

// Internet checksum over a byte range (RFC 1071).
uint16_t inet_checksum(const uint8_t* data, size_t len, uint32_t initial = 0);

}  // namespace streamon
