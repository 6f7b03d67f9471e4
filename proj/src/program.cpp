#include "streamon/program.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "streamon/bytes.hpp"

namespace streamon {

using nlohmann::json;

std::string ValidationError::join(const std::vector<std::string>& issues) {
    std::string out = "program validation failed:";
    for (const auto& s : issues) {
        out += "\n  - ";
        out += s;
    }
    return out;
}

int Program::metric_slot(const std::string& id) const {
    for (size_t i = 0; i < metrics.size(); ++i) {
        if (metrics[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

int Program::feature_slot(const std::string& id) const {
    for (size_t i = 0; i < features.size(); ++i) {
        if (features[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

int Program::event_slot(const std::string& id) const {
    for (size_t i = 0; i < events.size(); ++i) {
        if (events[i].id == id) return static_cast<int>(i);
    }
    return -1;
}

int Program::state_slot(const std::string& name) const {
    for (size_t i = 0; i < states.size(); ++i) {
        if (states[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

const HandlerSpec* Program::handler(int state, int event) const {
    if (state < 0 || state >= static_cast<int>(states.size())) return nullptr;
    for (const auto& h : states[state].handlers) {
        if (h.event_slot == event) return &h;
    }
    return nullptr;
}

namespace {

std::string format_param(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

bool valid_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    }
    return true;
}

bool expr_has_kind(const Expr& e, Expr::Kind k) {
    if (e.kind == k) return true;
    if (e.lhs && expr_has_kind(*e.lhs, k)) return true;
    if (e.rhs && expr_has_kind(*e.rhs, k)) return true;
    return false;
}

void collect_tables(const Expr& e, std::vector<std::string>& out) {
    if (e.kind == Expr::Kind::Table) out.push_back(e.name);
    if (e.lhs) collect_tables(*e.lhs, out);
    if (e.rhs) collect_tables(*e.rhs, out);
}

// Accumulates findings and offers checked accessors over the document.
// Parsing continues past most problems so one run reports everything.
class Builder {
public:
    std::vector<std::string> errors;
    Program prog;

    void err(std::string m) { errors.push_back(std::move(m)); }
    void warn(std::string m) { prog.warnings.push_back(std::move(m)); }

    // ------------------------- parameter handling -------------------------

    // Replaces every ${name} with the parameter's numeric rendering.
    std::string substitute(const std::string& s, const std::string& where) {
        std::string out;
        size_t pos = 0;
        while (pos < s.size()) {
            size_t open = s.find("${", pos);
            if (open == std::string::npos) {
                out.append(s, pos, std::string::npos);
                break;
            }
            out.append(s, pos, open - pos);
            size_t close = s.find('}', open + 2);
            if (close == std::string::npos) {
                err(where + ": unterminated ${ in \"" + s + "\"");
                return out;
            }
            std::string name = s.substr(open + 2, close - open - 2);
            auto it = prog.parameters.find(name);
            if (it == prog.parameters.end()) {
                err(where + ": unknown parameter '" + name + "'");
            } else {
                out += format_param(it->second);
            }
            pos = close + 1;
        }
        return out;
    }

    double field_num(const json& obj, const char* key, const std::string& where,
                     double fallback) {
        auto it = obj.find(key);
        if (it == obj.end()) return fallback;
        return num(*it, where + "." + key, fallback);
    }

    // Numeric leaf that may be written as a number or as "${param}".
    double num(const json& v, const std::string& where, double fallback) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            std::string s = substitute(v.get<std::string>(), where);
            double out = fallback;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            if (ec != std::errc() || p != s.data() + s.size()) {
                err(where + ": not a number: \"" + v.get<std::string>() + "\"");
                return fallback;
            }
            return out;
        }
        err(where + ": expected a number");
        return fallback;
    }

    // --------------------------- json plumbing ----------------------------

    void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (const char* k : allowed) {
                if (it.key() == k) {
                    known = true;
                    break;
                }
            }
            if (!known) err(where + ": unknown key '" + it.key() + "'");
        }
    }

    std::string str(const json& obj, const char* key, const std::string& where,
                    bool required = true) {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_string()) {
            if (required) err(where + ": missing string '" + key + "'");
            return {};
        }
        return it->get<std::string>();
    }

    ExprPtr expr(const json& obj, const char* key, const std::string& where,
                 bool required = true) {
        auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) err(where + ": missing expression '" + key + "'");
            return nullptr;
        }
        std::string src;
        if (it->is_string()) {
            src = substitute(it->get<std::string>(), where);
        } else if (it->is_number()) {
            return Expr::make_const(it->get<double>());
        } else {
            err(where + ": expression '" + std::string(key) + "' must be a string");
            return nullptr;
        }
        try {
            return parse_expr(src);
        } catch (const SyntaxError& e) {
            err(where + ": " + e.what() + " in \"" + src + "\"");
            return nullptr;
        }
    }

    KeySpec key_list(const json& obj, const char* key, const std::string& where,
                     bool allow_primary) {
        KeySpec out;
        auto it = obj.find(key);
        if (it == obj.end()) return out;
        if (!it->is_array()) {
            err(where + ": '" + key + "' must be an array of field names");
            return out;
        }
        for (const auto& item : *it) {
            if (!item.is_string()) {
                err(where + ": key components must be strings");
                continue;
            }
            std::string name = item.get<std::string>();
            if (name == "key") {
                if (!allow_primary) {
                    err(where + ": 'key' cannot appear in an event key definition");
                    continue;
                }
                out.push_back(KeyPart{true, FieldId{}});
                continue;
            }
            auto id = field_from_name(name);
            if (!id) {
                err(where + ": unknown field '" + name + "'");
                continue;
            }
            if (!field_keyable(*id)) {
                err(where + ": field '" + name + "' cannot be part of a key");
                continue;
            }
            out.push_back(KeyPart{false, *id});
        }
        return out;
    }

    // ----------------------------- sections -------------------------------

    void parse_parameters(const json& doc, const std::map<std::string, double>& overrides) {
        auto it = doc.find("parameters");
        if (it != doc.end()) {
            if (!it->is_object()) {
                err("'parameters' must be an object");
            } else {
                for (auto p = it->begin(); p != it->end(); ++p) {
                    if (!p->is_number()) {
                        err("parameter '" + p.key() + "' must be a number");
                        continue;
                    }
                    prog.parameters[p.key()] = p->get<double>();
                }
            }
        }
        for (const auto& [k, v] : overrides) prog.parameters[k] = v;
    }

    void parse_metric(const json& m, size_t index) {
        std::string where = "metrics[" + std::to_string(index) + "]";
        if (!m.is_object()) {
            err(where + ": must be an object");
            return;
        }
        check_keys(m, {"id", "detector", "monitor", "chain"}, where);
        MetricSpec spec;
        spec.id = str(m, "id", where);
        if (!spec.id.empty()) where = "metric '" + spec.id + "'";
        if (!valid_identifier(spec.id)) err(where + ": id must be a plain identifier");
        spec.chain = str(m, "chain", where, false);

        if (auto d = m.find("detector"); d != m.end()) {
            std::string dw = where + " detector";
            check_keys(*d, {"k", "m", "seed", "window", "swap_threshold"}, dw);
            VariationDetectorConfig cfg;
            cfg.hash.k = static_cast<uint32_t>(field_num(*d, "k", dw, 4));
            cfg.hash.m = static_cast<uint32_t>(field_num(*d, "m", dw, 65536));
            cfg.hash.seed = d->contains("seed")
                                ? static_cast<uint64_t>(field_num(*d, "seed", dw, 0))
                                : default_seed(spec.id, "detector");
            cfg.window = field_num(*d, "window", dw, 0.0);
            cfg.swap_threshold = static_cast<uint64_t>(field_num(*d, "swap_threshold", dw, 0));
            if (cfg.window < 0) err(dw + ": window must be >= 0");
            if (cfg.window == 0 && cfg.swap_threshold == 0) {
                warn(dw + ": neither window nor swap_threshold set; memory never rolls over");
            }
            check_hash(cfg.hash, dw);
            spec.detector = cfg;
        }
        if (auto v = m.find("monitor"); v != m.end()) {
            std::string vw = where + " monitor";
            check_keys(*v, {"kind", "k", "m", "seed", "tau"}, vw);
            VariationMonitorConfig cfg;
            std::string kind = str(*v, "kind", vw);
            if (kind == "counting") {
                cfg.kind = VariationMonitorConfig::Kind::Counting;
                if (v->contains("tau")) err(vw + ": tau only applies to decaying monitors");
            } else if (kind == "decaying") {
                cfg.kind = VariationMonitorConfig::Kind::Decaying;
                cfg.tau = field_num(*v, "tau", vw, 0.0);
                if (!(cfg.tau > 0)) err(vw + ": decaying monitor needs tau > 0");
            } else if (!kind.empty()) {
                err(vw + ": kind must be 'counting' or 'decaying'");
            }
            cfg.hash.k = static_cast<uint32_t>(field_num(*v, "k", vw, 4));
            cfg.hash.m = static_cast<uint32_t>(field_num(*v, "m", vw, 65536));
            cfg.hash.seed = v->contains("seed")
                                ? static_cast<uint64_t>(field_num(*v, "seed", vw, 0))
                                : default_seed(spec.id, "monitor");
            check_hash(cfg.hash, vw);
            spec.monitor = cfg;
        }
        if (!spec.detector && !spec.monitor) {
            err(where + ": needs a detector, a monitor, or both");
        }
        prog.metrics.push_back(std::move(spec));
    }

    uint64_t default_seed(const std::string& metric_id, const char* role) {
        std::string tag = prog.name + "/" + metric_id + "/" + role;
        return fnv1a64(tag.data(), tag.size());
    }

    void check_hash(const HashConfig& h, const std::string& where) {
        if (h.k < 1 || h.k > 16) err(where + ": k must be in [1, 16]");
        if (h.m < 8 || h.m > (1u << 28)) err(where + ": m must be in [8, 2^28]");
    }

    void parse_event(const json& e, size_t index) {
        std::string where = "events[" + std::to_string(index) + "]";
        if (!e.is_object()) {
            err(where + ": must be an object");
            return;
        }
        check_keys(e, {"id", "type", "filter", "key", "related_key"}, where);
        EventDescriptor ev;
        ev.id = str(e, "id", where);
        if (!ev.id.empty()) where = "event '" + ev.id + "'";
        if (!valid_identifier(ev.id)) err(where + ": id must be a plain identifier");
        std::string type = e.contains("type") ? str(e, "type", where) : "packet";
        if (type == "timeout") {
            ev.type = EventType::Timeout;
            for (const char* k : {"filter", "key", "related_key"}) {
                if (e.contains(k)) err(where + ": timeout events cannot carry '" + k + "'");
            }
        } else if (type == "packet") {
            ev.type = EventType::Packet;
            ev.filter = expr(e, "filter", where, false);
            ev.key = key_list(e, "key", where, false);
            ev.related_key = key_list(e, "related_key", where, false);
        } else {
            err(where + ": type must be 'packet' or 'timeout'");
        }
        prog.events.push_back(std::move(ev));
    }

    void parse_feature(const json& f, size_t index) {
        std::string where = "features[" + std::to_string(index) + "]";
        if (!f.is_object()) {
            err(where + ": must be an object");
            return;
        }
        check_keys(f, {"id", "expr"}, where);
        FeatureSpec spec;
        spec.id = str(f, "id", where);
        if (!spec.id.empty()) where = "feature '" + spec.id + "'";
        if (!valid_identifier(spec.id)) err(where + ": id must be a plain identifier");
        spec.expr = expr(f, "expr", where);
        prog.features.push_back(std::move(spec));
    }

    MopSpec parse_mop(const json& m, const std::string& where) {
        MopSpec mop;
        if (!m.is_object()) {
            err(where + ": must be an object");
            return mop;
        }
        check_keys(m, {"op", "metric", "key", "monitor_key", "qty"}, where);
        std::string op = str(m, "op", where);
        if (op == "set") {
            mop.kind = MopSpec::Kind::Set;
        } else if (op == "get") {
            mop.kind = MopSpec::Kind::Get;
        } else if (!op.empty()) {
            err(where + ": op must be 'set' or 'get'");
        }
        mop.metric = str(m, "metric", where);
        mop.key = key_list(m, "key", where, true);
        if (mop.key.empty()) err(where + ": needs a non-empty 'key'");
        mop.monitor_key = key_list(m, "monitor_key", where, true);
        if (m.contains("qty")) mop.qty = expr(m, "qty", where, false);
        if (mop.kind == MopSpec::Kind::Get) {
            if (!mop.monitor_key.empty()) err(where + ": 'monitor_key' only applies to set");
            if (mop.qty) err(where + ": 'qty' only applies to set");
        }
        return mop;
    }

    ActionSpec parse_action(const json& a, const std::string& where) {
        ActionSpec act;
        if (!a.is_object()) {
            err(where + ": must be an object");
            return act;
        }
        std::string kind = str(a, "do", where);
        if (kind == "set_timeout" || kind == "update_timeout") {
            act.kind = kind == "set_timeout" ? ActionSpec::Kind::SetTimeout
                                             : ActionSpec::Kind::UpdateTimeout;
            check_keys(a, {"do", "timeout", "delay"}, where);
            act.name = str(a, "timeout", where);
            if (a.contains("delay")) {
                act.delay = num(a.at("delay"), where + ".delay", 0.0);
            } else {
                err(where + ": missing 'delay'");
            }
            if (!(act.delay > 0)) err(where + ": delay must be > 0");
        } else if (kind == "save_timeout_ctx") {
            act.kind = ActionSpec::Kind::SaveTimeoutCtx;
            check_keys(a, {"do", "timeout", "values"}, where);
            act.name = str(a, "timeout", where);
            auto v = a.find("values");
            if (v == a.end() || !v->is_object() || v->empty()) {
                err(where + ": needs a non-empty 'values' object");
            } else {
                for (auto it = v->begin(); it != v->end(); ++it) {
                    if (!valid_identifier(it.key())) {
                        err(where + ": context name '" + it.key() + "' is not an identifier");
                    }
                    ExprPtr e = expr(*v, it.key().c_str(), where);
                    act.ctx_values.emplace_back(it.key(), std::move(e));
                }
            }
        } else if (kind == "drop") {
            act.kind = ActionSpec::Kind::Drop;
            check_keys(a, {"do"}, where);
        } else if (kind == "allow") {
            act.kind = ActionSpec::Kind::Allow;
            check_keys(a, {"do"}, where);
        } else if (kind == "mark") {
            act.kind = ActionSpec::Kind::Mark;
            check_keys(a, {"do", "tag"}, where);
            act.name = str(a, "tag", where);
        } else if (kind == "next_status") {
            act.kind = ActionSpec::Kind::NextStatus;
            check_keys(a, {"do", "state"}, where);
            act.name = str(a, "state", where);
        } else if (kind == "update_table") {
            act.kind = ActionSpec::Kind::UpdateTable;
            check_keys(a, {"do", "table", "key", "value", "delete"}, where);
            act.name = str(a, "table", where);
            act.key = key_list(a, "key", where, false);
            if (a.contains("delete")) {
                if (!a.at("delete").is_boolean()) {
                    err(where + ": 'delete' must be a boolean");
                } else {
                    act.del = a.at("delete").get<bool>();
                }
            }
            if (a.contains("value")) act.value = expr(a, "value", where, false);
        } else if (kind == "print" || kind == "export") {
            act.kind = kind == "print" ? ActionSpec::Kind::Print : ActionSpec::Kind::Export;
            check_keys(a, {"do", "label"}, where);
            act.name = str(a, "label", where);
            if (act.name.empty()) err(where + ": needs a 'label'");
        } else if (!kind.empty()) {
            err(where + ": unknown action '" + kind + "'");
        }
        return act;
    }

    void parse_state(const json& s, size_t index) {
        std::string where = "states[" + std::to_string(index) + "]";
        if (!s.is_object()) {
            err(where + ": must be an object");
            return;
        }
        check_keys(s, {"name", "on"}, where);
        StateSpec state;
        state.name = str(s, "name", where);
        if (!state.name.empty()) where = "state '" + state.name + "'";
        if (!valid_identifier(state.name)) err(where + ": name must be a plain identifier");
        if (auto on = s.find("on"); on != s.end()) {
            if (!on->is_array()) {
                err(where + ": 'on' must be an array");
            } else {
                for (size_t hi = 0; hi < on->size(); ++hi) {
                    const json& h = (*on)[hi];
                    std::string hw = where + " handler[" + std::to_string(hi) + "]";
                    if (!h.is_object()) {
                        err(hw + ": must be an object");
                        continue;
                    }
                    check_keys(h, {"event", "mops", "decisions"}, hw);
                    HandlerSpec handler;
                    handler.event = str(h, "event", hw);
                    if (!handler.event.empty()) hw = where + " handler '" + handler.event + "'";
                    if (auto mops = h.find("mops"); mops != h.end()) {
                        if (!mops->is_array()) {
                            err(hw + ": 'mops' must be an array");
                        } else {
                            for (size_t mi = 0; mi < mops->size(); ++mi) {
                                handler.mops.push_back(parse_mop(
                                    (*mops)[mi], hw + " mop[" + std::to_string(mi) + "]"));
                            }
                        }
                    }
                    if (auto dec = h.find("decisions"); dec != h.end()) {
                        if (!dec->is_array()) {
                            err(hw + ": 'decisions' must be an array");
                        } else {
                            for (size_t di = 0; di < dec->size(); ++di) {
                                const json& d = (*dec)[di];
                                std::string dw = hw + " decision[" + std::to_string(di) + "]";
                                if (!d.is_object()) {
                                    err(dw + ": must be an object");
                                    continue;
                                }
                                check_keys(d, {"when", "actions"}, dw);
                                DecisionEntry entry;
                                entry.when = expr(d, "when", dw, false);
                                auto acts = d.find("actions");
                                if (acts == d.end() || !acts->is_array() || acts->empty()) {
                                    err(dw + ": needs a non-empty 'actions' array");
                                } else {
                                    for (size_t ai = 0; ai < acts->size(); ++ai) {
                                        entry.actions.push_back(parse_action(
                                            (*acts)[ai],
                                            dw + " action[" + std::to_string(ai) + "]"));
                                    }
                                }
                                handler.decisions.push_back(std::move(entry));
                            }
                        }
                    }
                    state.handlers.push_back(std::move(handler));
                }
            }
        }
        prog.states.push_back(std::move(state));
    }

    // --------------------------- cross-checks -----------------------------

    struct Scope : BindScope {
        const Program* p;
        bool names_visible;  // filters bind without metrics/features
        int metric_slot(const std::string& id) const override {
            return names_visible ? p->metric_slot(id) : -1;
        }
        int feature_slot(const std::string& id) const override {
            return names_visible ? p->feature_slot(id) : -1;
        }
    };

    // names_visible=false marks event filters, which run before any flow
    // context exists: no metrics, features, tables, or timeout context.
    void bind(ExprPtr& e, bool names_visible, const std::string& where) {
        if (!e) return;
        Scope scope;
        scope.p = &prog;
        scope.names_visible = names_visible;
        std::vector<std::string> issues;
        bind_expr(*e, scope, issues);
        for (auto& i : issues) err(where + ": " + i);
        if (!names_visible) {
            if (expr_has_kind(*e, Expr::Kind::Table)) {
                err(where + ": filters cannot read tables");
            }
            if (expr_has_kind(*e, Expr::Kind::Ctx)) {
                err(where + ": filters cannot read timeout context");
            }
            return;
        }
        std::vector<std::string> tables;
        collect_tables(*e, tables);
        for (const auto& t : tables) {
            if (std::find(prog.tables.begin(), prog.tables.end(), t) == prog.tables.end()) {
                err(where + ": table '" + t + "' is not declared");
            }
        }
    }

    void warn_on_ctx(const ExprPtr& e, const std::string& where) {
        if (e && expr_has_kind(*e, Expr::Kind::Ctx)) {
            warn(where + ": reads ctx[] outside a timeout handler; it never has a value");
        }
    }

    void check_unique(const std::vector<std::string>& names, const char* what) {
        std::set<std::string> seen;
        for (const auto& n : names) {
            if (n.empty()) continue;
            if (!seen.insert(n).second) err(std::string(what) + " '" + n + "' declared twice");
        }
    }

    bool keyspec_has_fields(const KeySpec& ks) {
        return std::any_of(ks.begin(), ks.end(), [](const KeyPart& p) { return !p.primary; });
    }

    void resolve() {
        // Name uniqueness and collisions with the expression vocabulary.
        std::vector<std::string> metric_names, feature_names, event_names, state_names;
        for (const auto& m : prog.metrics) metric_names.push_back(m.id);
        for (const auto& f : prog.features) feature_names.push_back(f.id);
        for (const auto& e : prog.events) event_names.push_back(e.id);
        for (const auto& s : prog.states) state_names.push_back(s.name);
        check_unique(metric_names, "metric");
        check_unique(feature_names, "feature");
        check_unique(event_names, "event");
        check_unique(state_names, "state");
        check_unique(prog.tables, "table");
        for (const auto& m : prog.metrics) {
            if (prog.feature_slot(m.id) >= 0) {
                err("'" + m.id + "' is both a metric and a feature");
            }
            if (named_constant(m.id)) err("metric id '" + m.id + "' shadows a constant");
        }
        for (const auto& f : prog.features) {
            if (named_constant(f.id)) err("feature id '" + f.id + "' shadows a constant");
        }
        for (const auto& t : prog.tables) {
            if (t == "related") err("table name 'related' is reserved");
            if (!valid_identifier(t)) err("table name '" + t + "' is not an identifier");
        }

        // Metric chains resolve and form no cycles.
        for (auto& m : prog.metrics) {
            if (m.chain.empty()) continue;
            m.chain_slot = prog.metric_slot(m.chain);
            if (m.chain_slot < 0) {
                err("metric '" + m.id + "': chain parent '" + m.chain + "' does not exist");
            }
        }
        for (size_t i = 0; i < prog.metrics.size(); ++i) {
            int hops = 0;
            int cur = static_cast<int>(i);
            while (cur >= 0 && hops <= static_cast<int>(prog.metrics.size())) {
                cur = prog.metrics[cur].chain_slot;
                ++hops;
            }
            if (cur >= 0 || hops > static_cast<int>(prog.metrics.size())) {
                err("metric '" + prog.metrics[i].id + "': chain forms a cycle");
                break;
            }
        }

        // Features bind and order topologically.
        for (auto& f : prog.features) {
            bind(f.expr, true, "feature '" + f.id + "'");
        }
        order_features();

        // Events: filters bind against constants only.
        for (auto& e : prog.events) {
            bind(e.filter, false, "event '" + e.id + "' filter");
        }

        // Default state must exist.
        prog.default_state_slot = prog.state_slot(prog.default_state);
        if (prog.default_state_slot < 0) {
            err("default_state '" + prog.default_state + "' is not declared");
            prog.default_state_slot = 0;
        }

        // Handlers, MOPs, decisions, actions.
        for (auto& s : prog.states) {
            std::set<std::string> events_seen;
            for (auto& h : s.handlers) {
                std::string hw = "state '" + s.name + "' handler '" + h.event + "'";
                h.event_slot = prog.event_slot(h.event);
                if (h.event_slot < 0) {
                    err(hw + ": event does not exist");
                    continue;
                }
                if (!events_seen.insert(h.event).second) {
                    err(hw + ": duplicate handler for this event");
                }
                bool is_timeout = prog.events[h.event_slot].type == EventType::Timeout;
                for (auto& mop : h.mops) {
                    std::string mw = hw + " mop on '" + mop.metric + "'";
                    mop.slot = prog.metric_slot(mop.metric);
                    if (mop.slot < 0) err(mw + ": metric does not exist");
                    if (mop.qty) {
                        // Features are computed after the metric operations of
                        // a handler run, so a qty can never observe one.
                        std::vector<std::string> names;
                        collect_names(*mop.qty, names);
                        for (const auto& nm : names) {
                            if (prog.feature_slot(nm) >= 0) {
                                err(mw + ": qty cannot reference feature '" + nm + "'");
                            }
                        }
                    }
                    bind(mop.qty, true, mw + " qty");
                    if (is_timeout) {
                        if (keyspec_has_fields(mop.key) || keyspec_has_fields(mop.monitor_key)) {
                            err(mw + ": timeout handlers can only use 'key' in key lists");
                        }
                        if (mop.qty) warn_on_fields(*mop.qty, mw + " qty");
                    } else {
                        warn_on_ctx(mop.qty, mw + " qty");
                    }
                }
                for (auto& d : h.decisions) {
                    std::string dw = hw;
                    bind(d.when, true, dw + " condition");
                    if (is_timeout && d.when) {
                        warn_on_fields(*d.when, dw + " condition");
                    } else {
                        warn_on_ctx(d.when, dw + " condition");
                    }
                    for (auto& a : d.actions) {
                        resolve_action(a, dw, is_timeout);
                    }
                }
            }
        }

        unused_warnings();
    }

    void warn_on_fields(const Expr& e, const std::string& where) {
        std::vector<FieldId> fields;
        collect_fields(e, fields);
        if (!fields.empty()) {
            warn(where + ": references packet field '" + field_name(fields[0]) +
                 "' in a timeout handler; it will never be available");
        }
    }

    void resolve_action(ActionSpec& a, const std::string& where, bool is_timeout) {
        switch (a.kind) {
            case ActionSpec::Kind::SetTimeout:
            case ActionSpec::Kind::UpdateTimeout:
            case ActionSpec::Kind::SaveTimeoutCtx: {
                a.slot = prog.event_slot(a.name);
                if (a.slot < 0) {
                    err(where + ": timeout event '" + a.name + "' does not exist");
                } else if (prog.events[a.slot].type != EventType::Timeout) {
                    err(where + ": event '" + a.name + "' is not a timeout event");
                }
                for (auto& [cname, cexpr] : a.ctx_values) {
                    bind(cexpr, true, where + " ctx '" + cname + "'");
                    if (is_timeout && cexpr) {
                        warn_on_fields(*cexpr, where + " ctx '" + cname + "'");
                    } else {
                        warn_on_ctx(cexpr, where + " ctx '" + cname + "'");
                    }
                }
                return;
            }
            case ActionSpec::Kind::NextStatus:
                a.slot = prog.state_slot(a.name);
                if (a.slot < 0) err(where + ": state '" + a.name + "' does not exist");
                return;
            case ActionSpec::Kind::UpdateTable: {
                bool related = a.name == "related";
                if (!related &&
                    std::find(prog.tables.begin(), prog.tables.end(), a.name) ==
                        prog.tables.end()) {
                    err(where + ": table '" + a.name + "' is not declared");
                }
                if (related) {
                    if (a.key.empty()) {
                        err(where + ": updating 'related' needs a 'key' field list");
                    }
                    if (a.value) err(where + ": 'related' stores keys, not values");
                    if (is_timeout) err(where + ": cannot update 'related' from a timeout");
                } else {
                    if (!a.key.empty()) {
                        err(where + ": 'key' only applies to the 'related' table");
                    }
                    if (!a.del && !a.value) {
                        err(where + ": needs 'value' or 'delete': true");
                    }
                    if (a.del && a.value) {
                        err(where + ": 'value' and 'delete' are mutually exclusive");
                    }
                    bind(a.value, true, where + " value");
                    if (is_timeout && a.value) {
                        warn_on_fields(*a.value, where + " value");
                    } else {
                        warn_on_ctx(a.value, where + " value");
                    }
                }
                return;
            }
            case ActionSpec::Kind::Mark:
                if (a.name.empty()) err(where + ": mark needs a 'tag'");
                return;
            default:
                return;
        }
    }

    void order_features() {
        size_t n = prog.features.size();
        std::vector<std::vector<int>> deps(n);
        std::vector<int> indegree(n, 0);
        for (size_t i = 0; i < n; ++i) {
            if (!prog.features[i].expr) continue;
            std::vector<std::string> names;
            collect_names(*prog.features[i].expr, names);
            for (const auto& name : names) {
                int f = prog.feature_slot(name);
                if (f >= 0 && f != static_cast<int>(i)) {
                    deps[f].push_back(static_cast<int>(i));
                    ++indegree[i];
                } else if (f == static_cast<int>(i)) {
                    err("feature '" + prog.features[i].id + "' references itself");
                }
            }
        }
        std::vector<int> ready;
        for (size_t i = 0; i < n; ++i) {
            if (indegree[i] == 0) ready.push_back(static_cast<int>(i));
        }
        // Stable order: among ready features, lowest declaration index first.
        std::vector<int> order;
        while (!ready.empty()) {
            std::sort(ready.begin(), ready.end());
            int cur = ready.front();
            ready.erase(ready.begin());
            order.push_back(cur);
            for (int next : deps[cur]) {
                if (--indegree[next] == 0) ready.push_back(next);
            }
        }
        if (order.size() != n) {
            std::string cyc = "feature dependencies form a cycle:";
            for (size_t i = 0; i < n; ++i) {
                if (indegree[i] > 0) cyc += " " + prog.features[i].id;
            }
            err(cyc);
        }
        prog.feature_order = std::move(order);
    }

    void unused_warnings() {
        std::vector<bool> metric_used(prog.metrics.size(), false);
        std::vector<bool> event_used(prog.events.size(), false);
        auto mark_names = [&](const ExprPtr& e) {
            if (!e) return;
            std::vector<std::string> names;
            collect_names(*e, names);
            for (const auto& n : names) {
                int m = prog.metric_slot(n);
                if (m >= 0) metric_used[m] = true;
            }
        };
        for (const auto& f : prog.features) mark_names(f.expr);
        for (const auto& s : prog.states) {
            for (const auto& h : s.handlers) {
                if (h.event_slot >= 0) event_used[h.event_slot] = true;
                for (const auto& mop : h.mops) {
                    if (mop.slot >= 0) metric_used[mop.slot] = true;
                    mark_names(mop.qty);
                }
                for (const auto& d : h.decisions) {
                    mark_names(d.when);
                    for (const auto& a : d.actions) {
                        mark_names(a.value);
                        for (const auto& [cn, ce] : a.ctx_values) mark_names(ce);
                        if (a.slot >= 0 &&
                            (a.kind == ActionSpec::Kind::SetTimeout ||
                             a.kind == ActionSpec::Kind::UpdateTimeout ||
                             a.kind == ActionSpec::Kind::SaveTimeoutCtx)) {
                            event_used[a.slot] = true;
                        }
                    }
                }
            }
        }
        for (size_t i = 0; i < prog.metrics.size(); ++i) {
            if (!metric_used[i]) warn("metric '" + prog.metrics[i].id + "' is never used");
        }
        for (size_t i = 0; i < prog.events.size(); ++i) {
            if (!event_used[i]) warn("event '" + prog.events[i].id + "' is never handled");
        }
    }

    // ------------------------------ driver --------------------------------

    Program build(const std::string& text, const std::map<std::string, double>& overrides) {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw SyntaxError(std::string("invalid JSON: ") + e.what(),
                              static_cast<size_t>(e.byte));
        }
        if (!doc.is_object()) throw SyntaxError("program document must be a JSON object", 0);
        check_keys(doc,
                   {"program", "default_state", "parameters", "metrics", "features", "tables",
                    "events", "states"},
                   "document");
        prog.name = str(doc, "program", "document");
        prog.default_state = str(doc, "default_state", "document");
        parse_parameters(doc, overrides);

        auto section = [&](const char* key, auto fn) {
            auto it = doc.find(key);
            if (it == doc.end()) return;
            if (!it->is_array()) {
                err(std::string("'") + key + "' must be an array");
                return;
            }
            for (size_t i = 0; i < it->size(); ++i) fn((*it)[i], i);
        };
        section("metrics", [&](const json& j, size_t i) { parse_metric(j, i); });
        section("features", [&](const json& j, size_t i) { parse_feature(j, i); });
        section("events", [&](const json& j, size_t i) { parse_event(j, i); });
        section("states", [&](const json& j, size_t i) { parse_state(j, i); });
        if (auto it = doc.find("tables"); it != doc.end()) {
            if (!it->is_array()) {
                err("'tables' must be an array of names");
            } else {
                for (const auto& t : *it) {
                    if (t.is_string()) {
                        prog.tables.push_back(t.get<std::string>());
                    } else {
                        err("'tables' entries must be strings");
                    }
                }
            }
        }
        if (prog.states.empty()) err("program declares no states");
        if (prog.events.empty()) err("program declares no events");

        resolve();

        if (!errors.empty()) throw ValidationError(std::move(errors));
        return std::move(prog);
    }
};

}  // namespace

Program parse_program(const std::string& json_text,
                      const std::map<std::string, double>& overrides) {
    Builder b;
    return b.build(json_text, overrides);
}

Program parse_program_file(const std::string& path,
                           const std::map<std::string, double>& overrides) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw ValidationError({"cannot open program file: " + path});
    std::string text;
    char buf[4096];
    size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, got);
    std::fclose(f);
    return parse_program(text, overrides);
}

}  // namespace streamon
