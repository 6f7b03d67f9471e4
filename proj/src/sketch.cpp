#include "streamon/sketch.hpp"

#include <algorithm>
#include <cassert>

namespace streamon {

// --------------------------- VariationDetector -----------------------------

VariationDetector::VariationDetector(const VariationDetectorConfig& cfg) : cfg_(cfg) {
    size_t words = (cfg_.hash.m + 63) / 64;
    active_.assign(words, 0);
    previous_.assign(words, 0);
}

void VariationDetector::advance(double ts) {
    if (cfg_.window <= 0.0 || !anchored_) return;
    double elapsed = ts - last_swap_;
    if (elapsed < cfg_.window) return;
    // How many epoch boundaries passed since we last looked. Computed by
    // division so a long idle gap costs O(1) instead of one rotate per epoch.
    uint64_t missed = static_cast<uint64_t>(elapsed / cfg_.window);
    if (missed >= 2) {
        std::fill(active_.begin(), active_.end(), 0);
        std::fill(previous_.begin(), previous_.end(), 0);
        active_inserts_ = 0;
        swaps_ += missed;
    } else {
        rotate();
    }
    last_swap_ += static_cast<double>(missed) * cfg_.window;
}

void VariationDetector::rotate() {
    std::swap(previous_, active_);
    std::fill(active_.begin(), active_.end(), 0);
    active_inserts_ = 0;
    ++swaps_;
}

bool VariationDetector::test(const BitArray& bits) const {
    for (uint32_t i : idx_) {
        if (!(bits[i >> 6] & (1ull << (i & 63)))) return false;
    }
    return true;
}

void VariationDetector::set_bits(BitArray& bits) {
    for (uint32_t i : idx_) bits[i >> 6] |= 1ull << (i & 63);
}

bool VariationDetector::observe(const Bytes& key, double ts) {
    if (!anchored_) {
        last_swap_ = ts;
        anchored_ = true;
    }
    advance(ts);
    hash_indices(cfg_.hash, key, idx_);
    bool known = test(active_) || test(previous_);
    set_bits(active_);
    ++active_inserts_;
    if (cfg_.swap_threshold > 0 && active_inserts_ >= cfg_.swap_threshold) {
        rotate();
        last_swap_ = ts;  // a count-triggered swap restarts the time window too
    }
    return !known;
}

bool VariationDetector::contains(const Bytes& key, double ts) const {
    hash_indices(cfg_.hash, key, idx_);
    if (cfg_.window > 0.0 && anchored_) {
        double elapsed = ts - last_swap_;
        if (elapsed >= 2.0 * cfg_.window) return false;
        if (elapsed >= cfg_.window) return test(active_);  // previous would be dropped
    }
    return test(active_) || test(previous_);
}

// ---------------------------- VariationMonitor -----------------------------

VariationMonitor::VariationMonitor(const VariationMonitorConfig& cfg) : cfg_(cfg) {
    cells_.assign(cfg_.hash.m, Cell{});
}

double VariationMonitor::decayed(const Cell& c, double ts) const {
    if (cfg_.kind == VariationMonitorConfig::Kind::Counting) return c.value;
    if (c.value == 0.0) return 0.0;
    double dt = ts - c.ts;
    if (dt <= 0.0) return c.value;
    return c.value * std::exp(-dt / cfg_.tau);
}

void VariationMonitor::update(const Bytes& key, double ts, double qty) {
    hash_indices(cfg_.hash, key, idx_);
    for (uint32_t i : idx_) {
        Cell& c = cells_[i];
        c.value = decayed(c, ts) + qty;
        c.ts = ts;
    }
}

double VariationMonitor::query(const Bytes& key, double ts) const {
    hash_indices(cfg_.hash, key, idx_);
    double best = decayed(cells_[idx_[0]], ts);
    for (size_t j = 1; j < idx_.size(); ++j) {
        best = std::min(best, decayed(cells_[idx_[j]], ts));
    }
    return best;
}

// ----------------------------- MultiHashMetric -----------------------------

MultiHashMetric::MultiHashMetric(std::optional<VariationDetectorConfig> vd,
                                 std::optional<VariationMonitorConfig> vm) {
    if (vd) vd_.emplace(*vd);
    if (vm) vm_.emplace(*vm);
}

bool MultiHashMetric::set(const Bytes& detection_key, const Bytes& monitor_key, double ts,
                          double qty) {
    bool gate_open = true;
    if (vd_) gate_open = vd_->observe(detection_key, ts);
    if (!gate_open) return false;
    if (vm_) vm_->update(monitor_key.empty() ? detection_key : monitor_key, ts, qty);
    return true;
}

double MultiHashMetric::get(const Bytes& key, double ts) {
    if (vm_) return vm_->query(key, ts);
    if (vd_) return vd_->contains(key, ts) ? 1.0 : 0.0;
    return 0.0;
}

}  // namespace streamon
