#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamon/expr.hpp"
#include "streamon/packet.hpp"
#include "streamon/sketch.hpp"

namespace streamon {

// Semantic problems in a program document. Collects every issue found so
// authors fix a file in one round-trip instead of one error at a time.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> issues)
        : std::runtime_error(join(issues)), issues_(std::move(issues)) {}
    const std::vector<std::string>& issues() const { return issues_; }

private:
    static std::string join(const std::vector<std::string>& issues);
    std::vector<std::string> issues_;
};

// One component of a flow key: either a packet field or the event's already
// composed primary key (spelled "key" in documents).
struct KeyPart {
    bool primary = false;
    FieldId field{};
};
using KeySpec = std::vector<KeyPart>;

struct MetricSpec {
    std::string id;
    std::optional<VariationDetectorConfig> detector;
    std::optional<VariationMonitorConfig> monitor;
    std::string chain;    // parent metric id; this metric's set MOPs only
    int chain_slot = -1;  // run when the parent updated its monitor
};

struct FeatureSpec {
    std::string id;
    ExprPtr expr;
};

enum class EventType { Packet, Timeout };

struct EventDescriptor {
    std::string id;
    EventType type = EventType::Packet;
    ExprPtr filter;       // packet events; null matches every packet
    KeySpec key;          // primary key composition; may be empty (global flow)
    KeySpec related_key;  // when set, the primary key is resolved through the
                          // related table first, falling back to `key`
};

// Metric operation attached to a state/event handler.
struct MopSpec {
    enum class Kind { Set, Get };
    Kind kind = Kind::Set;
    std::string metric;
    int slot = -1;
    KeySpec key;          // set: detection key; get: query key
    KeySpec monitor_key;  // set only; empty means "same as key"
    ExprPtr qty;          // set only; null means 1
};

struct ActionSpec {
    enum class Kind {
        SetTimeout,
        UpdateTimeout,
        SaveTimeoutCtx,
        Drop,
        Allow,
        Mark,
        NextStatus,
        UpdateTable,
        Print,
        Export,
    };
    Kind kind = Kind::Print;
    std::string name;   // timeout id, state, table, tag, or label
    int slot = -1;      // resolved timeout event / state index
    double delay = 0.0; // timeouts
    bool del = false;   // update_table: delete instead of write
    KeySpec key;        // update_table on "related": the secondary key
    ExprPtr value;      // update_table: value written under the primary key
    std::vector<std::pair<std::string, ExprPtr>> ctx_values;  // save_timeout_ctx
};

// Ordered decision row: the first row of a handler whose condition holds
// executes its actions; the remaining rows are skipped. A null condition
// always holds.
struct DecisionEntry {
    ExprPtr when;
    std::vector<ActionSpec> actions;
};

struct HandlerSpec {
    std::string event;
    int event_slot = -1;
    std::vector<MopSpec> mops;
    std::vector<DecisionEntry> decisions;
};

struct StateSpec {
    std::string name;
    std::vector<HandlerSpec> handlers;
};

struct Program {
    std::string name;
    std::string default_state;
    int default_state_slot = 0;
    std::map<std::string, double> parameters;  // after overrides
    std::vector<MetricSpec> metrics;
    std::vector<FeatureSpec> features;
    std::vector<int> feature_order;  // dependency evaluation order
    std::vector<std::string> tables;
    std::vector<EventDescriptor> events;
    std::vector<StateSpec> states;
    std::vector<std::string> warnings;  // non-fatal validation findings

    int metric_slot(const std::string& id) const;
    int feature_slot(const std::string& id) const;
    int event_slot(const std::string& id) const;
    int state_slot(const std::string& name) const;
    // handler for (state, event) or null
    const HandlerSpec* handler(int state, int event) const;
};

// Parses and validates a JSON program document. `${name}` placeholders in
// numeric positions and expression strings are replaced from the document's
// "parameters" object merged with `overrides`. Malformed JSON or expressions
// raise SyntaxError; semantic problems raise ValidationError with the full
// list. Non-fatal findings land in Program::warnings.
Program parse_program(const std::string& json_text,
                      const std::map<std::string, double>& overrides = {});

Program parse_program_file(const std::string& path,
                           const std::map<std::string, double>& overrides = {});

}  // namespace streamon
