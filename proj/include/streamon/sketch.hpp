#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamon/bytes.hpp"
#include "streamon/hash.hpp"

namespace streamon {

// ---------------------------------------------------------------------------
// Variation detector: a pair of plain Bloom filters (active + previous) that
// answer "has this key been seen recently?". The pair rolls forward when the
// active filter has absorbed swap_threshold inserts or when window seconds
// have elapsed, whichever comes first; a key is considered known if either
// filter contains it, so detection memory spans one to two epochs.
// ---------------------------------------------------------------------------

struct VariationDetectorConfig {
    HashConfig hash;
    double window = 0.0;          // seconds per epoch; 0 disables time-based swap
    uint64_t swap_threshold = 0;  // inserts per epoch; 0 disables count-based swap
};

class VariationDetector {
public:
    explicit VariationDetector(const VariationDetectorConfig& cfg);

    // Inserts the key and reports whether it was unseen before this call
    // (i.e. a variation). Advances the epoch clock to ts first.
    bool observe(const Bytes& key, double ts);

    // Pure membership probe; does not insert and does not mutate.
    bool contains(const Bytes& key, double ts) const;

    uint64_t swaps() const { return swaps_; }

private:
    using BitArray = std::vector<uint64_t>;

    void advance(double ts);
    void rotate();
    bool test(const BitArray& bits) const;
    void set_bits(BitArray& bits);

    VariationDetectorConfig cfg_;
    BitArray active_;
    BitArray previous_;
    uint64_t active_inserts_ = 0;
    uint64_t swaps_ = 0;
    double last_swap_ = 0.0;
    bool anchored_ = false;  // last_swap_ is meaningless until first observe
    mutable std::vector<uint32_t> idx_;
};

// ---------------------------------------------------------------------------
// Variation monitor: a k-of-m sketch accumulating per-key quantities.
//
//   kind == Counting  — additive cells, query returns the minimum, so the
//                       answer may overestimate but never undercounts.
//   kind == Decaying  — each cell carries (value, timestamp) and the value
//                       fades by exp(-dt/tau) before every touch, giving a
//                       sliding exponential window without any timer wheel.
// ---------------------------------------------------------------------------

struct VariationMonitorConfig {
    enum class Kind { Counting, Decaying };
    Kind kind = Kind::Counting;
    HashConfig hash;
    double tau = 0.0;  // decay constant in seconds; required for Decaying
};

class VariationMonitor {
public:
    explicit VariationMonitor(const VariationMonitorConfig& cfg);

    void update(const Bytes& key, double ts, double qty);
    double query(const Bytes& key, double ts) const;

private:
    struct Cell {
        double value = 0.0;
        double ts = 0.0;
    };

    double decayed(const Cell& c, double ts) const;

    VariationMonitorConfig cfg_;
    std::vector<Cell> cells_;
    mutable std::vector<uint32_t> idx_;
};

// ---------------------------------------------------------------------------
// Metric backend seam. The engine talks to metrics through this interface so
// tests can swap the sketch implementation for an exact associative-map one
// and compare outcomes.
// ---------------------------------------------------------------------------

class MetricBackend {
public:
    virtual ~MetricBackend() = default;

    // Feeds one observation. detection_key drives the variation detector,
    // monitor_key the monitor (callers pass the same key when the program
    // defines no separate monitoring key). Returns true when the metric
    // advanced — the signal downstream chained metrics are gated on.
    virtual bool set(const Bytes& detection_key, const Bytes& monitor_key, double ts,
                     double qty) = 0;

    // Reads the current value for a key. Monitor value when a monitor is
    // configured, otherwise detector membership as 1/0.
    virtual double get(const Bytes& key, double ts) = 0;
};

// Sketch-backed metric: optional detector gating an optional monitor.
// With both present, only keys the detector reports as fresh reach the
// monitor; with the detector absent every set updates the monitor; with the
// monitor absent the metric reduces to recent-membership.
class MultiHashMetric : public MetricBackend {
public:
    MultiHashMetric(std::optional<VariationDetectorConfig> vd,
                    std::optional<VariationMonitorConfig> vm);

    bool set(const Bytes& detection_key, const Bytes& monitor_key, double ts,
             double qty) override;
    double get(const Bytes& key, double ts) override;

private:
    std::optional<VariationDetector> vd_;
    std::optional<VariationMonitor> vm_;
};

}  // namespace streamon
