#include "streamon/frame.hpp"

namespace streamon {

namespace {

void append_mac_for(Bytes& b, uint32_t ip) {
    // Locally administered MAC derived from the IP; keeps frames readable
    // in external tools without a real ARP layer.
    append_u8(b, 0x02);
    append_u8(b, 0x00);
    append_u32be(b, ip);
}

void patch_u16be(Bytes& b, size_t off, uint16_t v) {
    b[off] = static_cast<uint8_t>(v >> 8);
    b[off + 1] = static_cast<uint8_t>(v);
}

// Appends the IPv4 header (no options) and returns the offset of the header.
size_t append_ipv4(Bytes& b, uint32_t src, uint32_t dst, uint8_t proto,
                   uint16_t payload_len) {
    size_t off = b.size();
    append_u8(b, 0x45);  // version 4, ihl 5
    append_u8(b, 0);     // dscp/ecn
    append_u16be(b, static_cast<uint16_t>(20 + payload_len));
    append_u16be(b, 0);       // identification
    append_u16be(b, 0x4000);  // don't fragment
    append_u8(b, 64);         // ttl
    append_u8(b, proto);
    append_u16be(b, 0);  // checksum, patched below
    append_u32be(b, src);
    append_u32be(b, dst);
    uint16_t cks = inet_checksum(b.data() + off, 20);
    patch_u16be(b, off + 10, cks);
    return off;
}

uint32_t pseudo_header_sum(uint32_t src, uint32_t dst, uint8_t proto, uint16_t l4_len) {
    uint32_t sum = 0;
    sum += src >> 16;
    sum += src & 0xffff;
    sum += dst >> 16;
    sum += dst & 0xffff;
    sum += proto;
    sum += l4_len;
    return sum;
}

Bytes make_frame(uint32_t src_ip, uint32_t dst_ip, uint8_t proto, const Bytes& l4) {
    Bytes b;
    b.reserve(14 + 20 + l4.size());
    append_mac_for(b, dst_ip);
    append_mac_for(b, src_ip);
    append_u16be(b, 0x0800);
    append_ipv4(b, src_ip, dst_ip, proto, static_cast<uint16_t>(l4.size()));
    b.insert(b.end(), l4.begin(), l4.end());
    return b;
}

void append_dns_name(Bytes& b, const std::string& qname) {
    size_t start = 0;
    while (start <= qname.size()) {
        size_t dot = qname.find('.', start);
        if (dot == std::string::npos) dot = qname.size();
        size_t len = dot - start;
        append_u8(b, static_cast<uint8_t>(len));
        for (size_t i = start; i < dot; ++i) append_u8(b, static_cast<uint8_t>(qname[i]));
        if (dot == qname.size()) break;
        start = dot + 1;
    }
    append_u8(b, 0);
}

Bytes make_dns_message(uint16_t txid, bool response, uint8_t rcode, const std::string& qname,
                       uint16_t qtype, uint16_t answers) {
    Bytes m;
    append_u16be(m, txid);
    uint16_t flags = 0;
    if (response) flags |= 0x8000 | 0x0400;  // QR, AA
    flags |= 0x0100;                         // RD
    flags |= rcode & 0x0f;
    append_u16be(m, flags);
    append_u16be(m, 1);        // qdcount
    append_u16be(m, answers);  // ancount
    append_u16be(m, 0);        // nscount
    append_u16be(m, 0);        // arcount
    append_dns_name(m, qname);
    append_u16be(m, qtype);
    append_u16be(m, 1);  // class IN
    for (uint16_t i = 0; i < answers; ++i) {
        append_u16be(m, 0xc00c);  // pointer to the question name
        append_u16be(m, 1);       // type A
        append_u16be(m, 1);       // class IN
        append_u32be(m, 60);      // ttl
        append_u16be(m, 4);       // rdlength
        append_u32be(m, 0x5db8d800u + i);  // 93.184.216.x
    }
    return m;
}

}  // namespace

uint32_t ipv4(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
    return static_cast<uint32_t>(a) << 24 | static_cast<uint32_t>(b) << 16 |
           static_cast<uint32_t>(c) << 8 | static_cast<uint32_t>(d);
}

uint16_t inet_checksum(const uint8_t* data, size_t len, uint32_t initial) {
    uint32_t sum = initial;
    size_t i = 0;
    for (; i + 1 < len; i += 2) {
        sum += static_cast<uint32_t>(data[i]) << 8 | data[i + 1];
    }
    if (i < len) sum += static_cast<uint32_t>(data[i]) << 8;
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<uint16_t>(~sum);
}

Bytes make_udp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t dport,
                     const Bytes& payload) {
    Bytes l4;
    uint16_t len = static_cast<uint16_t>(8 + payload.size());
    append_u16be(l4, sport);
    append_u16be(l4, dport);
    append_u16be(l4, len);
    append_u16be(l4, 0);  // checksum below
    l4.insert(l4.end(), payload.begin(), payload.end());
    uint16_t cks = inet_checksum(l4.data(), l4.size(),
                                 pseudo_header_sum(src_ip, dst_ip, 17, len));
    if (cks == 0) cks = 0xffff;  // 0 means "no checksum" in UDP
    patch_u16be(l4, 6, cks);
    return make_frame(src_ip, dst_ip, 17, l4);
}

Bytes make_tcp_frame(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t dport,
                     uint8_t flags, uint32_t seq, const Bytes& payload) {
    Bytes l4;
    append_u16be(l4, sport);
    append_u16be(l4, dport);
    append_u32be(l4, seq);
    append_u32be(l4, 0);        // ack
    append_u8(l4, 0x50);        // data offset 5
    append_u8(l4, flags);
    append_u16be(l4, 0xffff);   // window
    append_u16be(l4, 0);        // checksum below
    append_u16be(l4, 0);        // urgent pointer
    l4.insert(l4.end(), payload.begin(), payload.end());
    uint16_t cks = inet_checksum(
        l4.data(), l4.size(),
        pseudo_header_sum(src_ip, dst_ip, 6, static_cast<uint16_t>(l4.size())));
    patch_u16be(l4, 16, cks);
    return make_frame(src_ip, dst_ip, 6, l4);
}

Bytes make_dns_query(uint32_t src_ip, uint32_t dst_ip, uint16_t sport, uint16_t txid,
                     const std::string& qname, uint16_t qtype) {
    return make_udp_frame(src_ip, dst_ip, sport, 53,
                          make_dns_message(txid, false, 0, qname, qtype, 0));
}

Bytes make_dns_response(uint32_t src_ip, uint32_t dst_ip, uint16_t dport, uint16_t txid,
                        const std::string& qname, uint16_t qtype, uint8_t rcode,
                        uint16_t answers) {
    return make_udp_frame(src_ip, dst_ip, 53, dport,
                          make_dns_message(txid, true, rcode, qname, qtype, answers));
}

}  // namespace streamon
