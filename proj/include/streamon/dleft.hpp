#pragma once

#include <cstdint>
#include <vector>

#include "streamon/bytes.hpp"
#include "streamon/hash.hpp"

namespace streamon {

// d-left hash table: d fixed-width subtables, one candidate bucket per
// subtable, inserts go to the least-loaded candidate (ties broken toward the
// lowest subtable index). Each cell stores a 64-bit fingerprint for cheap
// rejection plus the full key for exact verification, so lookups are
// collision-free. Capacity is fixed; a put into d full buckets reports
// TableFull instead of evicting.
template <typename V>
class DLeftTable {
public:
    static constexpr uint32_t kSubtables = 4;
    static constexpr uint32_t kCellsPerBucket = 8;

    enum class PutResult { Inserted, Updated, TableFull };

    DLeftTable(uint32_t buckets_per_subtable, uint64_t seed)
        : buckets_(buckets_per_subtable),
          seed_(seed),
          cells_(static_cast<size_t>(kSubtables) * buckets_per_subtable * kCellsPerBucket) {}

    PutResult put(const Bytes& key, V value) {
        uint64_t fp = fingerprint(key);
        // Update in place if the key is already stored anywhere.
        for (uint32_t t = 0; t < kSubtables; ++t) {
            size_t base = bucket_base(t, bucket_of(key, t));
            for (uint32_t c = 0; c < kCellsPerBucket; ++c) {
                Cell& cell = cells_[base + c];
                if (cell.used && cell.fp == fp && cell.key == key) {
                    cell.value = std::move(value);
                    return PutResult::Updated;
                }
            }
        }
        // Otherwise place into the emptiest candidate bucket.
        uint32_t best_t = 0;
        size_t best_base = 0;
        uint32_t best_load = kCellsPerBucket + 1;
        for (uint32_t t = 0; t < kSubtables; ++t) {
            size_t base = bucket_base(t, bucket_of(key, t));
            uint32_t load = bucket_load(base);
            if (load < best_load) {
                best_load = load;
                best_t = t;
                best_base = base;
            }
        }
        (void)best_t;
        if (best_load >= kCellsPerBucket) return PutResult::TableFull;
        for (uint32_t c = 0; c < kCellsPerBucket; ++c) {
            Cell& cell = cells_[best_base + c];
            if (!cell.used) {
                cell.used = true;
                cell.fp = fp;
                cell.key = key;
                cell.value = std::move(value);
                ++size_;
                return PutResult::Inserted;
            }
        }
        return PutResult::TableFull;  // unreachable: load said there was room
    }

    V* get(const Bytes& key) {
        uint64_t fp = fingerprint(key);
        for (uint32_t t = 0; t < kSubtables; ++t) {
            size_t base = bucket_base(t, bucket_of(key, t));
            for (uint32_t c = 0; c < kCellsPerBucket; ++c) {
                Cell& cell = cells_[base + c];
                if (cell.used && cell.fp == fp && cell.key == key) return &cell.value;
            }
        }
        return nullptr;
    }

    const V* get(const Bytes& key) const {
        return const_cast<DLeftTable*>(this)->get(key);
    }

    bool remove(const Bytes& key) {
        uint64_t fp = fingerprint(key);
        for (uint32_t t = 0; t < kSubtables; ++t) {
            size_t base = bucket_base(t, bucket_of(key, t));
            for (uint32_t c = 0; c < kCellsPerBucket; ++c) {
                Cell& cell = cells_[base + c];
                if (cell.used && cell.fp == fp && cell.key == key) {
                    cell = Cell{};
                    --size_;
                    return true;
                }
            }
        }
        return false;
    }

    size_t size() const { return size_; }
    size_t capacity() const { return cells_.size(); }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const Cell& cell : cells_) {
            if (cell.used) fn(cell.key, cell.value);
        }
    }

private:
    struct Cell {
        bool used = false;
        uint64_t fp = 0;
        Bytes key;
        V value{};
    };

    uint64_t fingerprint(const Bytes& key) const {
        return hash64(key, seed_ ^ 0xf1e2d3c4b5a69788ull);
    }

    uint32_t bucket_of(const Bytes& key, uint32_t subtable) const {
        return static_cast<uint32_t>(hash64(key, seed_ + subtable) % buckets_);
    }

    size_t bucket_base(uint32_t subtable, uint32_t bucket) const {
        return (static_cast<size_t>(subtable) * buckets_ + bucket) * kCellsPerBucket;
    }

    uint32_t bucket_load(size_t base) const {
        uint32_t load = 0;
        for (uint32_t c = 0; c < kCellsPerBucket; ++c) {
            if (cells_[base + c].used) ++load;
        }
        return load;
    }

    uint32_t buckets_;
    uint64_t seed_;
    std::vector<Cell> cells_;
    size_t size_ = 0;
};

}  // namespace streamon
