#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "streamon/bytes.hpp"

namespace streamon {

// One synthetic capture: timestamped frames plus the machine-readable ground
// truth the acceptance checks compare engine output against. The truth is
// computed from the scenario's construction (which hosts misbehave and when),
// not by running the engine, so it stays an independent yardstick.
struct Scenario {
    std::string name;
    std::vector<std::pair<double, Bytes>> frames;  // non-decreasing timestamps
    nlohmann::ordered_json truth;
};

// Scenario names; each matches the shipped program it is meant to drive.
const std::vector<std::string>& list_scenarios();

// Builds a deterministic scenario. The same (name, seed, duration) triple
// always yields byte-identical frames and truth. `duration` extends trailing
// background traffic past the scenario's natural end; 0 keeps the default.
Scenario generate_scenario(const std::string& name, uint64_t seed,
                           double duration = 0.0);

// Writes the frames as a capture file, and the ground truth alongside when
// truth_path is non-empty.
void write_scenario(const Scenario& sc, const std::string& pcap_path,
                    const std::string& truth_path);

// Timestamp after a capture write+read round trip (microsecond grid). The
// generators pass every timestamp through this so analytic ground truth
// matches what a replay of the written file observes.
double quantize_capture_ts(double ts);

}  // namespace streamon
