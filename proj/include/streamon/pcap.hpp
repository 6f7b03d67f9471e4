#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamon {

// Raised for files that cannot be opened or are not valid classic capture
// files; callers map it to a distinct exit status.
class PcapError : public std::runtime_error {
public:
    explicit PcapError(const std::string& what) : std::runtime_error(what) {}
};

// One captured record; data aliases the reader's internal buffer and stays
// valid until the reader is destroyed.
struct PcapRecord {
    double ts = 0.0;
    const uint8_t* data = nullptr;
    uint32_t len = 0;       // captured length
    uint32_t orig_len = 0;  // length on the wire
};

// Reads classic (non-ng) capture files, both byte orders, microsecond and
// nanosecond timestamp flavours. Only Ethernet link type is accepted. The
// whole file is slurped up front; replay then walks it without further I/O.
class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    // Advances to the next record; false at end of file. A record header
    // pointing past the end of the file raises PcapError.
    bool next(PcapRecord& out);

    uint32_t link_type() const { return link_type_; }

private:
    std::vector<uint8_t> buf_;
    size_t pos_ = 0;
    bool swap_ = false;
    double frac_unit_ = 1e-6;
    uint32_t link_type_ = 0;

    uint32_t rd32(size_t off) const;
    uint16_t rd16(size_t off) const;
};

// Writes classic little-endian microsecond capture files, Ethernet link type.
class PcapWriter {
public:
    explicit PcapWriter(const std::string& path);
    ~PcapWriter();

    PcapWriter(const PcapWriter&) = delete;
    PcapWriter& operator=(const PcapWriter&) = delete;

    void write(double ts, const std::vector<uint8_t>& frame);
    void close();

private:
    std::FILE* f_ = nullptr;
};

}  // namespace streamon
