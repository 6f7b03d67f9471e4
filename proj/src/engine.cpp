#include "streamon/engine.hpp"

#include <algorithm>

namespace streamon {

// Everything one handler run needs: the triggering packet or timeout context,
// the flow key and status, and the value environments built up phase by phase.
struct Engine::Activation {
    const PacketView* pkt = nullptr;                     // null for timeouts
    const std::map<std::string, double>* ctx = nullptr;  // null for packets
    int event_slot = -1;
    bool timeout = false;
    Bytes key;
    int state_before = 0;
    int next_state = 0;
    bool has_existing = false;
    double created = 0;
    int state_after = 0;
    int decision = -1;
    Verdict verdict = Verdict::None;
    std::vector<std::string> marks;
    std::vector<std::optional<double>> metric_env;
    std::vector<double> feature_env;
    std::vector<uint8_t> feature_done;
    std::vector<Alert> alerts;  // deferred until the final state is known

    // Back to a blank slate while keeping every container's capacity, so a
    // reused activation allocates nothing after warm-up.
    void reset() {
        pkt = nullptr;
        ctx = nullptr;
        event_slot = -1;
        timeout = false;
        key.clear();
        state_before = 0;
        next_state = 0;
        has_existing = false;
        created = 0;
        state_after = 0;
        decision = -1;
        verdict = Verdict::None;
        marks.clear();
        alerts.clear();
    }
};

struct Engine::Env : EvalContext {
    Engine* eng;
    const Activation* act;

    std::optional<double> field(FieldId id) const override {
        if (!act->pkt) return std::nullopt;
        return field_value(*act->pkt, id);
    }
    std::optional<double> metric(int slot) const override {
        if (slot < 0 || slot >= static_cast<int>(act->metric_env.size())) return std::nullopt;
        return act->metric_env[slot];
    }
    std::optional<double> feature(int slot) const override {
        if (slot < 0 || slot >= static_cast<int>(act->feature_env.size())) return std::nullopt;
        if (!act->feature_done[slot]) return std::nullopt;
        return act->feature_env[slot];
    }
    std::optional<double> table(const std::string& name) const override {
        return eng->table_value(name, act->key);
    }
    std::optional<double> ctx(const std::string& name) const override {
        if (!act->ctx) return std::nullopt;
        auto it = act->ctx->find(name);
        if (it == act->ctx->end()) return std::nullopt;
        return it->second;
    }
};

namespace {

std::unique_ptr<MetricBackend> default_metric(const MetricSpec& spec) {
    return std::make_unique<MultiHashMetric>(spec.detector, spec.monitor);
}

}  // namespace

Engine::Engine(const Program& prog) : Engine(prog, Options{}) {}

Engine::Engine(const Program& prog, Options opts)
    : prog_(prog),
      factory_(opts.metric_factory ? std::move(opts.metric_factory) : default_metric),
      alert_sink_(std::move(opts.alert_sink)),
      tracer_(std::move(opts.tracer)),
      status_(opts.status_buckets, opts.status_seed),
      chain_ready_(prog.metrics.size(), 0),
      scratch_act_(std::make_unique<Activation>()) {
    metrics_.reserve(prog_.metrics.size());
    for (const MetricSpec& m : prog_.metrics) metrics_.push_back(factory_(m));
    for (const std::string& t : prog_.tables) tables_[t];  // materialise
}

Engine::~Engine() = default;

PacketOutcome Engine::process_packet(const Bytes& frame, double ts) {
    return process_packet(frame.data(), static_cast<uint32_t>(frame.size()), ts);
}

PacketOutcome Engine::process_packet(const uint8_t* frame, uint32_t len, double ts) {
    ++counters_.packets;
    if (ts < clock_) {
        ++counters_.clamped_ts;
        ts = clock_;
    }
    fire_due(ts);
    clock_ = ts;

    PacketOutcome out;
    std::optional<PacketView> pkt = dissect(frame, len, ts);
    if (!pkt) {
        ++counters_.malformed;
        out.malformed = true;
        return out;
    }

    std::fill(chain_ready_.begin(), chain_ready_.end(), 0);
    bool any_matched = false;
    for (size_t ei = 0; ei < prog_.events.size(); ++ei) {
        const EventDescriptor& ev = prog_.events[ei];
        if (ev.type != EventType::Packet) continue;

        Activation& act = *scratch_act_;
        act.reset();
        act.pkt = &*pkt;
        act.event_slot = static_cast<int>(ei);

        if (ev.filter) {
            Env env;
            env.eng = this;
            env.act = &act;
            std::optional<double> v = eval_expr(*ev.filter, env);
            if (!v || *v == 0) continue;
        }
        any_matched = true;

        // Primary key: through the related table when asked, else directly.
        bool composed = false;
        if (!ev.related_key.empty()) {
            if (std::optional<Bytes> sec = compose_key(act, ev.related_key)) {
                auto it = related_.find(*sec);
                if (it != related_.end()) {
                    act.key = it->second;
                    composed = true;
                }
            }
        }
        if (!composed) {
            if (!ev.related_key.empty() && ev.key.empty()) {
                ++counters_.key_misses;
                continue;
            }
            if (!compose_key_into(act, ev.key, key_scratch_a_)) {
                ++counters_.key_misses;
                continue;
            }
            std::swap(act.key, key_scratch_a_);
        }

        const FlowStatus* fs = status_.get(act.key);
        act.state_before = fs ? fs->state : prog_.default_state_slot;
        act.has_existing = fs != nullptr;
        act.created = fs ? fs->created : clock_;
        const HandlerSpec* h = prog_.handler(act.state_before, act.event_slot);
        if (!h) continue;  // this state ignores the event

        run_activation(act);
        ++counters_.activations;
        ++out.activations;
        if (act.verdict != Verdict::None) out.verdict = act.verdict;
        out.marks.insert(out.marks.end(), act.marks.begin(), act.marks.end());
    }
    if (!any_matched) ++counters_.unmatched;
    return out;
}

void Engine::advance_clock(double ts) {
    fire_due(ts);
    if (ts > clock_) clock_ = ts;
}

void Engine::fire_due(double ts) {
    while (!pending_.empty() && pending_.begin()->first.first <= ts) {
        auto node = pending_.extract(pending_.begin());
        TimeoutRecord rec = std::move(node.mapped());
        timeout_index_.erase({rec.event_slot, rec.key});
        clock_ = node.key().first;  // the handler observes the expiry instant
        ++counters_.timeouts_fired;

        const FlowStatus* fs = status_.get(rec.key);
        int state = fs ? fs->state : prog_.default_state_slot;
        const HandlerSpec* h = prog_.handler(state, rec.event_slot);
        if (!h) {
            ++counters_.stale_timeouts;
            continue;
        }
        std::fill(chain_ready_.begin(), chain_ready_.end(), 0);
        Activation& act = *scratch_act_;
        act.reset();
        act.ctx = &rec.ctx;
        act.event_slot = rec.event_slot;
        act.timeout = true;
        act.key = rec.key;
        act.state_before = state;
        act.has_existing = fs != nullptr;
        act.created = fs ? fs->created : clock_;
        run_activation(act);
        ++counters_.activations;
    }
}

void Engine::run_activation(Activation& act) {
    const HandlerSpec* h = prog_.handler(act.state_before, act.event_slot);
    act.next_state = act.state_before;
    act.metric_env.assign(prog_.metrics.size(), std::nullopt);
    act.feature_env.assign(prog_.features.size(), 0.0);
    act.feature_done.assign(prog_.features.size(), 0);

    run_mops(act, *h);

    for (int fi : prog_.feature_order) {
        std::optional<double> v;
        if (prog_.features[fi].expr) v = eval(act, *prog_.features[fi].expr);
        if (!v) {
            ++counters_.eval_errors;
            v = 0.0;
        }
        act.feature_env[fi] = *v;
        act.feature_done[fi] = 1;
    }

    run_decisions(act, *h);

    // Transition. The default state is encoded by absence, so entering it
    // deletes the row and entering any other state writes one.
    act.state_after = act.next_state;
    if (act.has_existing) {
        if (act.next_state == prog_.default_state_slot) {
            status_.remove(act.key);
        } else if (act.next_state != act.state_before) {
            status_.put(act.key, FlowStatus{act.next_state, act.created});
        }
    } else if (act.next_state != prog_.default_state_slot) {
        auto res = status_.put(act.key, FlowStatus{act.next_state, clock_});
        if (res == DLeftTable<FlowStatus>::PutResult::TableFull) {
            ++counters_.table_full;
            act.state_after = prog_.default_state_slot;  // flow stays implicit
        }
    }

    if (alert_sink_) {
        for (Alert& a : act.alerts) {
            a.state_before = prog_.states[act.state_before].name;
            a.state_after = prog_.states[act.state_after].name;
            alert_sink_(a);
        }
    }
    if (tracer_) {
        ActivationTrace t;
        t.event_slot = act.event_slot;
        t.timeout = act.timeout;
        t.key = act.key;
        t.state_before = act.state_before;
        t.state_after = act.state_after;
        t.decision = act.decision;
        t.verdict = act.verdict;
        t.features = act.feature_env;
        tracer_(t);
    }
}

void Engine::run_mops(Activation& act, const HandlerSpec& h) {
    Bytes& det = key_scratch_a_;
    Bytes& mon = key_scratch_b_;
    for (const MopSpec& mop : h.mops) {
        if (mop.slot < 0) continue;
        if (mop.kind == MopSpec::Kind::Get) {
            if (!compose_key_into(act, mop.key, det)) {
                ++counters_.key_misses;
                continue;
            }
            act.metric_env[mop.slot] = metrics_[mop.slot]->get(det, clock_);
            continue;
        }

        const MetricSpec& spec = prog_.metrics[mop.slot];
        if (spec.chain_slot >= 0 && !chain_ready_[spec.chain_slot]) {
            ++counters_.mops_suppressed;
            continue;
        }
        if (!compose_key_into(act, mop.key, det)) {
            ++counters_.key_misses;
            continue;
        }
        mon.clear();
        if (!mop.monitor_key.empty() && !compose_key_into(act, mop.monitor_key, mon)) {
            ++counters_.key_misses;
            continue;
        }
        double qty = 1.0;
        if (mop.qty) {
            std::optional<double> q = eval(act, *mop.qty);
            if (!q) {
                ++counters_.eval_errors;
                continue;
            }
            qty = *q;
        }
        if (metrics_[mop.slot]->set(det, mon, clock_, qty)) chain_ready_[mop.slot] = 1;
        // The metric's handler-visible value is its post-update estimate,
        // read back through the key the monitor was written under.
        const Bytes& bind_key = (spec.monitor && !mon.empty()) ? mon : det;
        act.metric_env[mop.slot] = metrics_[mop.slot]->get(bind_key, clock_);
    }
}

void Engine::run_decisions(Activation& act, const HandlerSpec& h) {
    for (size_t di = 0; di < h.decisions.size(); ++di) {
        const DecisionEntry& row = h.decisions[di];
        if (row.when) {
            std::optional<double> v = eval(act, *row.when);
            if (!v || *v == 0) continue;
        }
        act.decision = static_cast<int>(di);
        for (const ActionSpec& a : row.actions) apply_action(act, a);
        return;
    }
}

void Engine::apply_action(Activation& act, const ActionSpec& a) {
    switch (a.kind) {
        case ActionSpec::Kind::SetTimeout:
            arm_timeout(a.slot, act.key, clock_ + a.delay, true);
            return;
        case ActionSpec::Kind::UpdateTimeout:
            arm_timeout(a.slot, act.key, clock_ + a.delay, false);
            return;
        case ActionSpec::Kind::SaveTimeoutCtx:
            save_ctx(act, a);
            return;
        case ActionSpec::Kind::Drop:
            act.verdict = Verdict::Drop;
            return;
        case ActionSpec::Kind::Allow:
            act.verdict = Verdict::Allow;
            return;
        case ActionSpec::Kind::Mark:
            act.marks.push_back(a.name);
            return;
        case ActionSpec::Kind::NextStatus:
            act.next_state = a.slot;
            return;
        case ActionSpec::Kind::UpdateTable: {
            if (a.name == "related") {
                std::optional<Bytes> sec = compose_key(act, a.key);
                if (!sec) {
                    ++counters_.key_misses;
                    return;
                }
                if (a.del) {
                    related_.erase(*sec);
                } else {
                    related_[std::move(*sec)] = act.key;
                }
                return;
            }
            auto& tbl = tables_[a.name];
            if (a.del) {
                tbl.erase(act.key);
                return;
            }
            std::optional<double> v = eval(act, *a.value);
            if (!v) {
                ++counters_.eval_errors;
                return;
            }
            tbl[act.key] = *v;
            return;
        }
        case ActionSpec::Kind::Print:
        case ActionSpec::Kind::Export: {
            if (!alert_sink_) return;
            Alert alert;
            alert.event = prog_.events[act.event_slot].id;
            alert.clock = clock_;
            alert.key = act.key;
            alert.exported = a.kind == ActionSpec::Kind::Export;
            alert.label = a.name;
            alert.features.reserve(prog_.features.size());
            for (size_t i = 0; i < prog_.features.size(); ++i) {
                alert.features.emplace_back(prog_.features[i].id, act.feature_env[i]);
            }
            act.alerts.push_back(std::move(alert));
            return;
        }
    }
}

void Engine::arm_timeout(int event_slot, const Bytes& key, double fire_ts, bool create) {
    auto idx = timeout_index_.find({event_slot, key});
    if (idx != timeout_index_.end()) {
        // Re-arm: keep the saved context, take a fresh creation order.
        auto node = pending_.extract(idx->second);
        TimeoutId id{fire_ts, next_order_++};
        node.key() = id;
        pending_.insert(std::move(node));
        idx->second = id;
        return;
    }
    if (!create) return;  // update_timeout without a pending timeout: no-op
    TimeoutId id{fire_ts, next_order_++};
    pending_.emplace(id, TimeoutRecord{key, event_slot, {}});
    timeout_index_.emplace(std::make_pair(event_slot, key), id);
}

void Engine::save_ctx(Activation& act, const ActionSpec& a) {
    auto idx = timeout_index_.find({a.slot, act.key});
    if (idx == timeout_index_.end()) return;  // nothing pending to attach to
    TimeoutRecord& rec = pending_.at(idx->second);
    for (const auto& [name, e] : a.ctx_values) {
        if (!e) continue;
        std::optional<double> v = eval(act, *e);
        if (!v) {
            ++counters_.eval_errors;
            continue;
        }
        rec.ctx[name] = *v;
    }
}

std::optional<Bytes> Engine::compose_key(const Activation& act, const KeySpec& spec) const {
    Bytes out;
    if (!compose_key_into(act, spec, out)) return std::nullopt;
    return out;
}

bool Engine::compose_key_into(const Activation& act, const KeySpec& spec, Bytes& out) const {
    out.clear();
    for (const KeyPart& part : spec) {
        if (part.primary) {
            out.insert(out.end(), act.key.begin(), act.key.end());
            continue;
        }
        if (!act.pkt) return false;
        if (!append_field_bytes(*act.pkt, part.field, out)) return false;
    }
    return true;
}

std::optional<double> Engine::eval(const Activation& act, const Expr& e) {
    Env env;
    env.eng = this;
    env.act = &act;
    return eval_expr(e, env);
}

std::map<std::string, uint64_t> Engine::state_census() const {
    std::map<std::string, uint64_t> census;
    status_.for_each([&](const Bytes&, const FlowStatus& fs) {
        if (fs.state >= 0 && fs.state < static_cast<int>(prog_.states.size())) {
            ++census[prog_.states[fs.state].name];
        }
    });
    return census;
}

std::optional<double> Engine::table_value(const std::string& table, const Bytes& key) const {
    auto t = tables_.find(table);
    if (t == tables_.end()) return std::nullopt;
    auto v = t->second.find(key);
    if (v == t->second.end()) return std::nullopt;
    return v->second;
}

std::optional<Bytes> Engine::related_lookup(const Bytes& secondary) const {
    auto it = related_.find(secondary);
    if (it == related_.end()) return std::nullopt;
    return it->second;
}

}  // namespace streamon
