#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "streamon/bytes.hpp"
#include "streamon/dleft.hpp"
#include "streamon/packet.hpp"
#include "streamon/program.hpp"
#include "streamon/sketch.hpp"

namespace streamon {

enum class Verdict { None, Allow, Drop };

// One print/export emission. Raw values only; serialisation is the caller's
// concern.
struct Alert {
    std::string event;
    double clock = 0;
    Bytes key;
    std::string state_before;
    std::string state_after;
    bool exported = false;  // export vs print
    std::string label;
    std::vector<std::pair<std::string, double>> features;  // id -> value
};

struct PacketOutcome {
    Verdict verdict = Verdict::None;
    std::vector<std::string> marks;
    bool malformed = false;
    uint32_t activations = 0;  // handlers that ran for this packet
};

struct EngineCounters {
    uint64_t packets = 0;
    uint64_t malformed = 0;        // frames the dissector rejected
    uint64_t unmatched = 0;        // packets matching no event filter
    uint64_t activations = 0;      // handlers run (packet + timeout)
    uint64_t clamped_ts = 0;       // out-of-order timestamps forced forward
    uint64_t timeouts_fired = 0;
    uint64_t stale_timeouts = 0;   // fired in a state with no handler
    uint64_t eval_errors = 0;      // failed feature/qty evaluations
    uint64_t mops_suppressed = 0;  // chained sets gated off by their parent
    uint64_t key_misses = 0;       // events skipped: key not composable
    uint64_t table_full = 0;       // status-table insertions that found no room
};

// Per-flow record in the status table. Flows in the default state are not
// stored at all; entering the default state deletes the entry.
struct FlowStatus {
    int32_t state = 0;
    double created = 0;
};

// Test/debug hook: one record per handler activation.
struct ActivationTrace {
    int event_slot = -1;
    bool timeout = false;
    Bytes key;
    int state_before = 0;
    int state_after = 0;
    int decision = -1;  // matched decision row, -1 if none matched
    Verdict verdict = Verdict::None;
    std::vector<double> features;
};

// Executes one program over a packet stream: fires due timeouts, matches
// events, runs metric operations, computes features, and applies the first
// matching decision row of the current state's handler.
class Engine {
public:
    using MetricFactory = std::function<std::unique_ptr<MetricBackend>(const MetricSpec&)>;
    using AlertSink = std::function<void(const Alert&)>;
    using Tracer = std::function<void(const ActivationTrace&)>;

    struct Options {
        uint32_t status_buckets = 4096;  // per subtable, 8 cells each
        uint64_t status_seed = 0x51a7e5ull;
        MetricFactory metric_factory;  // default: sketch-backed metrics
        AlertSink alert_sink;
        Tracer tracer;
    };

    explicit Engine(const Program& prog);
    Engine(const Program& prog, Options opts);
    ~Engine();

    // Clamps ts to the virtual clock, fires timeouts due at or before it,
    // dissects the frame, and runs every matching event in declaration order.
    PacketOutcome process_packet(const uint8_t* frame, uint32_t len, double ts);
    PacketOutcome process_packet(const Bytes& frame, double ts);

    // Moves the virtual clock forward without a packet, firing due timeouts.
    void advance_clock(double ts);

    double clock() const { return clock_; }
    const Program& program() const { return prog_; }
    const EngineCounters& counters() const { return counters_; }

    // Live non-default flows per state name.
    std::map<std::string, uint64_t> state_census() const;
    const FlowStatus* flow(const Bytes& key) const { return status_.get(key); }
    size_t pending_timeouts() const { return pending_.size(); }
    std::optional<double> table_value(const std::string& table, const Bytes& key) const;
    std::optional<Bytes> related_lookup(const Bytes& secondary) const;

private:
    struct TimeoutRecord {
        Bytes key;
        int event_slot = -1;
        std::map<std::string, double> ctx;
    };
    using TimeoutId = std::pair<double, uint64_t>;  // (fire_ts, creation order)

    struct Env;
    struct Activation;

    void fire_due(double ts);
    void run_activation(Activation& act);
    void run_mops(Activation& act, const HandlerSpec& h);
    void run_decisions(Activation& act, const HandlerSpec& h);
    void apply_action(Activation& act, const ActionSpec& a);
    void arm_timeout(int event_slot, const Bytes& key, double fire_ts, bool create);
    void save_ctx(Activation& act, const ActionSpec& a);
    std::optional<Bytes> compose_key(const Activation& act, const KeySpec& spec) const;
    bool compose_key_into(const Activation& act, const KeySpec& spec, Bytes& out) const;
    std::optional<double> eval(const Activation& act, const Expr& e);

    const Program& prog_;
    MetricFactory factory_;
    AlertSink alert_sink_;
    Tracer tracer_;

    double clock_ = 0;
    uint64_t next_order_ = 0;
    std::vector<std::unique_ptr<MetricBackend>> metrics_;
    DLeftTable<FlowStatus> status_;
    std::unordered_map<Bytes, Bytes, BytesHash> related_;
    std::map<std::string, std::unordered_map<Bytes, double, BytesHash>> tables_;
    std::map<TimeoutId, TimeoutRecord> pending_;
    std::map<std::pair<int, Bytes>, TimeoutId> timeout_index_;
    EngineCounters counters_;
    std::vector<uint8_t> chain_ready_;  // metric advanced during this packet

    // Hot-path scratch, reused so the per-packet loop performs no steady-state
    // heap allocation. Activations never nest, so one of each is enough.
    std::unique_ptr<Activation> scratch_act_;
    mutable Bytes key_scratch_a_;
    mutable Bytes key_scratch_b_;
};

}  // namespace streamon
