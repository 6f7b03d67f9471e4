#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>

#include <json.hpp>

#include "streamon/engine.hpp"
#include "streamon/program.hpp"

namespace streamon {

struct ReplayOptions {
    // >1 splits flows across that many engines by a hash of the event key; a
    // pre-pass dispatches each packet to its owning engine while every other
    // engine's clock still advances, so timers fire in global order.
    int shards = 1;
    // Sleep between packets to approximate the capture's own pacing (gaps
    // capped at 250 ms so huge idle periods replay quickly).
    bool paced = false;
    // Seconds of virtual time past the last packet, letting armed timers
    // fire; 0 ends the replay at the final capture timestamp.
    double drain = 600.0;
};

struct ReplayResult {
    uint64_t frames = 0;
    double first_clock = 0.0;
    double last_clock = 0.0;
    uint64_t alerts = 0;
    double wall_seconds = 0.0;
    int shards = 1;
    EngineCounters counters;                 // summed over shards
    std::map<std::string, uint64_t> census;  // merged over shards
};

// Replays a capture through the program, streaming alerts as JSON lines to
// `alerts_out` (when non-null) ordered by (clock, shard, emission order).
// Throws PcapError for unreadable captures.
ReplayResult run_replay(const Program& prog, const std::string& pcap_path,
                        std::ostream* alerts_out, const ReplayOptions& opts = {});

// One alert as a JSON object; the replay writes one per line.
nlohmann::ordered_json alert_json(const Program& prog, const Alert& a);

// Machine-readable run summary.
nlohmann::ordered_json replay_report(const Program& prog, const std::string& pcap_path,
                                     const ReplayResult& r);

}  // namespace streamon
