#include "streamon/pcap.hpp"

#include <cstdio>
#include <cstring>

namespace streamon {

namespace {

constexpr uint32_t kMagicUsec = 0xa1b2c3d4;
constexpr uint32_t kMagicUsecSwapped = 0xd4c3b2a1;
constexpr uint32_t kMagicNsec = 0xa1b23c4d;
constexpr uint32_t kMagicNsecSwapped = 0x4d3cb2a1;
constexpr uint32_t kLinkEthernet = 1;
constexpr size_t kGlobalHeader = 24;
constexpr size_t kRecordHeader = 16;

inline uint32_t bswap32(uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

inline uint16_t bswap16(uint16_t v) { return static_cast<uint16_t>((v >> 8) | (v << 8)); }

void put_u32le(std::vector<uint8_t>& b, uint32_t v) {
    b.push_back(static_cast<uint8_t>(v));
    b.push_back(static_cast<uint8_t>(v >> 8));
    b.push_back(static_cast<uint8_t>(v >> 16));
    b.push_back(static_cast<uint8_t>(v >> 24));
}

}  // namespace

uint32_t PcapReader::rd32(size_t off) const {
    uint32_t v;
    std::memcpy(&v, buf_.data() + off, 4);
    return swap_ ? bswap32(v) : v;
}

uint16_t PcapReader::rd16(size_t off) const {
    uint16_t v;
    std::memcpy(&v, buf_.data() + off, 2);
    return swap_ ? bswap16(v) : v;
}

PcapReader::PcapReader(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw PcapError("cannot open capture file: " + path);
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    if (size < 0) {
        std::fclose(f);
        throw PcapError("cannot stat capture file: " + path);
    }
    buf_.resize(static_cast<size_t>(size));
    size_t got = buf_.empty() ? 0 : std::fread(buf_.data(), 1, buf_.size(), f);
    std::fclose(f);
    if (got != buf_.size()) throw PcapError("short read on capture file: " + path);
    if (buf_.size() < kGlobalHeader) throw PcapError("not a capture file (truncated): " + path);

    uint32_t magic;
    std::memcpy(&magic, buf_.data(), 4);
    switch (magic) {
        case kMagicUsec:
            break;
        case kMagicNsec:
            frac_unit_ = 1e-9;
            break;
        case kMagicUsecSwapped:
            swap_ = true;
            break;
        case kMagicNsecSwapped:
            swap_ = true;
            frac_unit_ = 1e-9;
            break;
        default:
            throw PcapError("not a capture file (bad magic): " + path);
    }
    link_type_ = rd32(20);
    if (link_type_ != kLinkEthernet) {
        throw PcapError("unsupported link type " + std::to_string(link_type_) + ": " + path);
    }
    pos_ = kGlobalHeader;
}

bool PcapReader::next(PcapRecord& out) {
    if (pos_ >= buf_.size()) return false;
    if (pos_ + kRecordHeader > buf_.size()) {
        throw PcapError("truncated record header in capture file");
    }
    uint32_t sec = rd32(pos_);
    uint32_t frac = rd32(pos_ + 4);
    uint32_t incl = rd32(pos_ + 8);
    uint32_t orig = rd32(pos_ + 12);
    if (pos_ + kRecordHeader + incl > buf_.size()) {
        throw PcapError("truncated record body in capture file");
    }
    out.ts = static_cast<double>(sec) + static_cast<double>(frac) * frac_unit_;
    out.data = buf_.data() + pos_ + kRecordHeader;
    out.len = incl;
    out.orig_len = orig;
    pos_ += kRecordHeader + incl;
    return true;
}

PcapWriter::PcapWriter(const std::string& path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw PcapError("cannot create capture file: " + path);
    std::vector<uint8_t> hdr;
    put_u32le(hdr, kMagicUsec);
    hdr.push_back(2);  // version 2.4
    hdr.push_back(0);
    hdr.push_back(4);
    hdr.push_back(0);
    put_u32le(hdr, 0);        // thiszone
    put_u32le(hdr, 0);        // sigfigs
    put_u32le(hdr, 65535);    // snaplen
    put_u32le(hdr, kLinkEthernet);
    std::fwrite(hdr.data(), 1, hdr.size(), f_);
}

PcapWriter::~PcapWriter() { close(); }

void PcapWriter::close() {
    if (f_) {
        std::fclose(f_);
        f_ = nullptr;
    }
}

void PcapWriter::write(double ts, const std::vector<uint8_t>& frame) {
    if (!f_) throw PcapError("write on closed capture file");
    uint32_t sec = static_cast<uint32_t>(ts);
    // Round to the nearest microsecond; carrying 1e6 up keeps ts monotone.
    uint32_t usec = static_cast<uint32_t>((ts - sec) * 1e6 + 0.5);
    if (usec >= 1000000) {
        ++sec;
        usec -= 1000000;
    }
    std::vector<uint8_t> hdr;
    put_u32le(hdr, sec);
    put_u32le(hdr, usec);
    put_u32le(hdr, static_cast<uint32_t>(frame.size()));
    put_u32le(hdr, static_cast<uint32_t>(frame.size()));
    std::fwrite(hdr.data(), 1, hdr.size(), f_);
    std::fwrite(frame.data(), 1, frame.size(), f_);
}

}  // namespace streamon
