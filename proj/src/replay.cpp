#include "streamon/replay.hpp"

#include <algorithm>
#include <chrono>
#include <thread>
#include <tuple>

#include "streamon/hash.hpp"
#include "streamon/packet.hpp"
#include "streamon/pcap.hpp"

namespace streamon {
namespace {

constexpr uint64_t kShardSeed = 0x5ea9d15b47c8ull;

std::string hex_of(const Bytes& b) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (uint8_t c : b) {
        s.push_back(digits[c >> 4]);
        s.push_back(digits[c & 0xf]);
    }
    return s;
}

// Four-byte keys are almost always one address; render them readably.
std::string display_key(const Bytes& b) {
    if (b.size() != 4) return hex_of(b);
    return std::to_string(b[0]) + "." + std::to_string(b[1]) + "." + std::to_string(b[2]) +
           "." + std::to_string(b[3]);
}

// Packet-only expression scope for the shard dispatcher. Event filters are
// validated to reference packet fields only, so everything else is absent.
struct FilterEnv : EvalContext {
    const PacketView* pkt = nullptr;
    std::optional<double> field(FieldId id) const override { return field_value(*pkt, id); }
    std::optional<double> metric(int) const override { return std::nullopt; }
    std::optional<double> feature(int) const override { return std::nullopt; }
    std::optional<double> table(const std::string&) const override { return std::nullopt; }
    std::optional<double> ctx(const std::string&) const override { return std::nullopt; }
};

std::vector<FieldId> key_fields(const KeySpec& spec) {
    std::vector<FieldId> out;
    out.reserve(spec.size());
    for (const auto& part : spec) out.push_back(part.field);
    return out;
}

// The engine a packet belongs to: the hash of the first matching event's
// flow key. Packets matching nothing (or whose key cannot be composed) go to
// shard 0 so the dispatcher's counters match a single engine's.
int pick_shard(const Program& prog, const PacketView& pkt, int shards) {
    FilterEnv env;
    env.pkt = &pkt;
    for (const auto& ev : prog.events) {
        if (ev.type != EventType::Packet) continue;
        if (ev.filter) {
            auto v = eval_expr(*ev.filter, env);
            if (!v || *v == 0.0) continue;
        }
        const KeySpec& spec = ev.related_key.empty() ? ev.key : ev.related_key;
        auto key = compose_flowkey(pkt, key_fields(spec));
        if (!key) continue;
        return static_cast<int>(hash64(*key, kShardSeed) % static_cast<uint64_t>(shards));
    }
    return 0;
}

struct TaggedAlert {
    double clock = 0;
    int shard = 0;
    uint64_t seq = 0;
    Alert alert;
};

}  // namespace

nlohmann::ordered_json alert_json(const Program& prog, const Alert& a) {
    nlohmann::ordered_json j;
    j["program"] = prog.name;
    j["event"] = a.event;
    j["clock"] = a.clock;
    j["key"] = display_key(a.key);
    j["key_hex"] = hex_of(a.key);
    j["state_before"] = a.state_before;
    j["state_after"] = a.state_after;
    j["action"] = a.exported ? "export" : "print";
    j["label"] = a.label;
    nlohmann::ordered_json f = nlohmann::ordered_json::object();
    for (const auto& [id, value] : a.features) f[id] = value;
    j["features"] = f;
    return j;
}

ReplayResult run_replay(const Program& prog, const std::string& pcap_path,
                        std::ostream* alerts_out, const ReplayOptions& opts) {
    const int shards = std::max(1, opts.shards);

    std::vector<TaggedAlert> alerts;
    uint64_t seq = 0;
    int current_shard = 0;

    Engine::Options eopts;
    eopts.alert_sink = [&](const Alert& a) {
        alerts.push_back({a.clock, current_shard, seq++, a});
    };

    std::vector<std::unique_ptr<Engine>> engines;
    engines.reserve(static_cast<size_t>(shards));
    for (int i = 0; i < shards; ++i) engines.push_back(std::make_unique<Engine>(prog, eopts));

    PcapReader reader(pcap_path);
    PcapRecord rec;

    ReplayResult res;
    res.shards = shards;
    bool first = true;
    double prev_ts = 0.0;
    const auto wall_start = std::chrono::steady_clock::now();

    while (reader.next(rec)) {
        if (first) {
            res.first_clock = rec.ts;
            first = false;
        } else if (opts.paced && rec.ts > prev_ts) {
            double gap = std::min(rec.ts - prev_ts, 0.25);
            std::this_thread::sleep_for(std::chrono::duration<double>(gap));
        }
        prev_ts = rec.ts;
        res.last_clock = rec.ts;
        ++res.frames;

        if (shards == 1) {
            current_shard = 0;
            engines[0]->process_packet(rec.data, rec.len, rec.ts);
            continue;
        }

        // Dispatch: the owning engine processes the packet, the rest only see
        // the clock move so their timers stay in step.
        auto pkt = dissect(rec.data, rec.len, rec.ts);
        int owner = pkt ? pick_shard(prog, *pkt, shards) : 0;
        for (int i = 0; i < shards; ++i) {
            current_shard = i;
            if (i == owner)
                engines[i]->process_packet(rec.data, rec.len, rec.ts);
            else
                engines[i]->advance_clock(rec.ts);
        }
    }

    if (opts.drain > 0.0 && res.frames > 0) {
        double end = res.last_clock + opts.drain;
        for (int i = 0; i < shards; ++i) {
            current_shard = i;
            engines[i]->advance_clock(end);
        }
    }

    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();

    std::stable_sort(alerts.begin(), alerts.end(), [](const TaggedAlert& a, const TaggedAlert& b) {
        return std::tie(a.clock, a.shard, a.seq) < std::tie(b.clock, b.shard, b.seq);
    });
    res.alerts = alerts.size();
    if (alerts_out) {
        for (const auto& t : alerts) *alerts_out << alert_json(prog, t.alert).dump() << "\n";
    }

    for (const auto& eng : engines) {
        const EngineCounters& c = eng->counters();
        res.counters.packets += c.packets;
        res.counters.malformed += c.malformed;
        res.counters.unmatched += c.unmatched;
        res.counters.activations += c.activations;
        res.counters.clamped_ts += c.clamped_ts;
        res.counters.timeouts_fired += c.timeouts_fired;
        res.counters.stale_timeouts += c.stale_timeouts;
        res.counters.eval_errors += c.eval_errors;
        res.counters.mops_suppressed += c.mops_suppressed;
        res.counters.key_misses += c.key_misses;
        res.counters.table_full += c.table_full;
        for (const auto& [state, n] : eng->state_census()) res.census[state] += n;
    }
    return res;
}

nlohmann::ordered_json replay_report(const Program& prog, const std::string& pcap_path,
                                     const ReplayResult& r) {
    nlohmann::ordered_json j;
    j["program"] = prog.name;
    j["capture"] = pcap_path;
    j["shards"] = r.shards;
    j["frames"] = r.frames;
    j["first_clock"] = r.first_clock;
    j["last_clock"] = r.last_clock;
    j["alerts"] = r.alerts;
    j["wall_seconds"] = r.wall_seconds;
    j["packets_per_second"] =
        r.wall_seconds > 0.0 ? static_cast<double>(r.frames) / r.wall_seconds : 0.0;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    c["packets"] = r.counters.packets;
    c["malformed"] = r.counters.malformed;
    c["unmatched"] = r.counters.unmatched;
    c["activations"] = r.counters.activations;
    c["clamped_ts"] = r.counters.clamped_ts;
    c["timeouts_fired"] = r.counters.timeouts_fired;
    c["stale_timeouts"] = r.counters.stale_timeouts;
    c["eval_errors"] = r.counters.eval_errors;
    c["mops_suppressed"] = r.counters.mops_suppressed;
    c["key_misses"] = r.counters.key_misses;
    c["table_full"] = r.counters.table_full;
    j["counters"] = c;
    nlohmann::ordered_json census = nlohmann::ordered_json::object();
    for (const auto& [state, n] : r.census) census[state] = n;
    j["census"] = census;
    return j;
}

}  // namespace streamon
