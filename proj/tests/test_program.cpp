#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamon/program.hpp"

using namespace streamon;
using nlohmann::json;

namespace {

// A small but fully featured scan-watch program touching every section.
const char* kBaseline = R"({
  "program": "scan_watch",
  "default_state": "default",
  "parameters": {"horizon": 60, "threshold": 20},
  "metrics": [
    {"id": "M1", "detector": {"k": 4, "m": 4096, "window": "${horizon}"}},
    {"id": "M2", "monitor": {"kind": "counting", "k": 4, "m": 4096, "seed": 7}},
    {"id": "M3",
     "detector": {"k": 4, "m": 4096, "swap_threshold": 100},
     "monitor": {"kind": "decaying", "k": 4, "m": 4096, "tau": "${horizon}"},
     "chain": "M2"}
  ],
  "features": [
    {"id": "F2", "expr": "F1 / ${threshold}"},
    {"id": "F1", "expr": "M2 + M3"}
  ],
  "tables": ["prev"],
  "events": [
    {"id": "E1", "filter": "ip.proto == TCP AND tcp.flags % 2 == 0", "key": ["ip.src"]},
    {"id": "E2", "key": ["ip.dst", "udp.dport"], "related_key": ["ip.dst"]},
    {"id": "T1", "type": "timeout"}
  ],
  "states": [
    {"name": "default", "on": [
      {"event": "E1",
       "mops": [
         {"op": "set", "metric": "M1", "key": ["ip.src"]},
         {"op": "set", "metric": "M2", "key": ["ip.src", "ip.dst"],
          "monitor_key": ["ip.src"], "qty": "pkt.len"},
         {"op": "get", "metric": "M3", "key": ["key"]}
       ],
       "decisions": [
         {"when": "F2 > 1", "actions": [
            {"do": "next_status", "state": "alerted"},
            {"do": "set_timeout", "timeout": "T1", "delay": "${horizon}"},
            {"do": "save_timeout_ctx", "timeout": "T1", "values": {"score": "F2"}},
            {"do": "export", "label": "scan-start"}
         ]},
         {"actions": [{"do": "allow"}]}
       ]},
      {"event": "E2",
       "decisions": [
         {"actions": [{"do": "update_table", "table": "related", "key": ["ip.src"]}]}
       ]}
    ]},
    {"name": "alerted", "on": [
      {"event": "E1",
       "decisions": [{"actions": [{"do": "drop"}, {"do": "mark", "tag": "scan"}]}]},
      {"event": "T1",
       "mops": [{"op": "get", "metric": "M3", "key": ["key"]}],
       "decisions": [
         {"when": "ctx[score] > 2",
          "actions": [
            {"do": "update_table", "table": "prev", "value": "F1"},
            {"do": "update_timeout", "timeout": "T1", "delay": 30}
          ]},
         {"actions": [
            {"do": "update_table", "table": "prev", "delete": true},
            {"do": "next_status", "state": "default"},
            {"do": "print", "label": "calmed-down"}
         ]}
       ]}
    ]}
  ]
})";

json baseline() { return json::parse(kBaseline); }

std::vector<std::string> issues_of(const json& doc) {
    try {
        parse_program(doc.dump());
    } catch (const ValidationError& e) {
        return e.issues();
    }
    return {};
}

bool has_issue(const std::vector<std::string>& issues, const std::string& needle) {
    return std::any_of(issues.begin(), issues.end(), [&](const std::string& s) {
        return s.find(needle) != std::string::npos;
    });
}

bool has_warning(const Program& p, const std::string& needle) {
    return std::any_of(p.warnings.begin(), p.warnings.end(), [&](const std::string& s) {
        return s.find(needle) != std::string::npos;
    });
}

}  // namespace

TEST_CASE("program: baseline document parses cleanly") {
    Program p = parse_program(kBaseline);

    CHECK(p.name == "scan_watch");
    CHECK(p.default_state == "default");
    CHECK(p.default_state_slot == 0);
    CHECK(p.parameters.at("horizon") == 60.0);
    CHECK(p.parameters.at("threshold") == 20.0);
    CHECK(p.warnings.empty());

    REQUIRE(p.metrics.size() == 3);
    REQUIRE(p.metrics[0].detector.has_value());
    CHECK(p.metrics[0].detector->window == 60.0);  // ${horizon}
    CHECK(p.metrics[0].detector->hash.m == 4096);
    CHECK_FALSE(p.metrics[0].monitor.has_value());
    REQUIRE(p.metrics[1].monitor.has_value());
    CHECK(p.metrics[1].monitor->kind == VariationMonitorConfig::Kind::Counting);
    CHECK(p.metrics[1].monitor->hash.seed == 7);
    CHECK(p.metrics[2].monitor->kind == VariationMonitorConfig::Kind::Decaying);
    CHECK(p.metrics[2].monitor->tau == 60.0);
    CHECK(p.metrics[2].chain == "M2");
    CHECK(p.metrics[2].chain_slot == 1);

    // Features are declared F2-first but must evaluate F1-first.
    REQUIRE(p.features.size() == 2);
    CHECK(p.feature_order == std::vector<int>{1, 0});

    REQUIRE(p.events.size() == 3);
    CHECK(p.events[0].type == EventType::Packet);
    CHECK(p.events[0].filter != nullptr);
    REQUIRE(p.events[0].key.size() == 1);
    CHECK(p.events[0].key[0].field == FieldId::IpSrc);
    CHECK(p.events[1].related_key.size() == 1);
    CHECK(p.events[2].type == EventType::Timeout);

    CHECK(p.metric_slot("M2") == 1);
    CHECK(p.metric_slot("nope") == -1);
    CHECK(p.feature_slot("F1") == 1);
    CHECK(p.event_slot("T1") == 2);
    CHECK(p.state_slot("alerted") == 1);

    const HandlerSpec* h = p.handler(0, p.event_slot("E1"));
    REQUIRE(h != nullptr);
    CHECK(h->mops.size() == 3);
    CHECK(h->mops[1].monitor_key.size() == 1);
    CHECK(h->mops[2].kind == MopSpec::Kind::Get);
    CHECK(h->mops[2].key[0].primary);
    CHECK(h->decisions.size() == 2);
    CHECK(h->decisions[0].when != nullptr);
    CHECK(h->decisions[1].when == nullptr);
    CHECK(h->decisions[0].actions[1].kind == ActionSpec::Kind::SetTimeout);
    CHECK(h->decisions[0].actions[1].slot == 2);
    CHECK(h->decisions[0].actions[1].delay == 60.0);

    CHECK(p.handler(1, p.event_slot("T1")) != nullptr);
    CHECK(p.handler(1, p.event_slot("E2")) == nullptr);
    CHECK(p.handler(-1, 0) == nullptr);
    CHECK(p.handler(7, 0) == nullptr);
}

TEST_CASE("program: omitted sketch seeds are derived deterministically") {
    Program a = parse_program(kBaseline);
    Program b = parse_program(kBaseline);
    // M1's detector seed was not written in the document.
    CHECK(a.metrics[0].detector->hash.seed == b.metrics[0].detector->hash.seed);
    CHECK(a.metrics[0].detector->hash.seed != 0);
    // Different roles on the same metric get different seeds.
    CHECK(a.metrics[2].detector->hash.seed != a.metrics[2].monitor->hash.seed);
}

TEST_CASE("program: parameter overrides replace document values") {
    Program p = parse_program(kBaseline, {{"horizon", 30.0}, {"threshold", 5.0}});
    CHECK(p.parameters.at("horizon") == 30.0);
    CHECK(p.metrics[0].detector->window == 30.0);
    CHECK(p.metrics[2].monitor->tau == 30.0);

    // ${threshold} was substituted textually before parsing.
    int f2 = p.feature_slot("F2");
    std::string rendered = to_string(*p.features[f2].expr);
    CHECK(rendered.find('5') != std::string::npos);
    CHECK(rendered.find("${") == std::string::npos);

    // Overrides may introduce parameters the document never declared.
    Program q = parse_program(kBaseline, {{"extra", 1.0}});
    CHECK(q.parameters.at("extra") == 1.0);
}

TEST_CASE("program: multiple problems are reported together") {
    json doc = baseline();
    doc["default_state"] = "nowhere";
    doc["metrics"][0].erase("detector");                  // metric with no backend
    doc["states"][0]["on"][0]["mops"][0]["metric"] = "MX";  // unknown metric
    auto issues = issues_of(doc);
    CHECK(issues.size() >= 3);
    CHECK(has_issue(issues, "default_state 'nowhere' is not declared"));
    CHECK(has_issue(issues, "needs a detector, a monitor, or both"));
    CHECK(has_issue(issues, "metric does not exist"));
}

TEST_CASE("program: structural validation errors") {
    SUBCASE("unknown top-level key") {
        json doc = baseline();
        doc["extras"] = 1;
        CHECK(has_issue(issues_of(doc), "unknown key 'extras'"));
    }
    SUBCASE("unknown key inside a metric") {
        json doc = baseline();
        doc["metrics"][0]["windowz"] = 3;
        CHECK(has_issue(issues_of(doc), "unknown key 'windowz'"));
    }
    SUBCASE("duplicate metric id") {
        json doc = baseline();
        doc["metrics"][1]["id"] = "M1";
        CHECK(has_issue(issues_of(doc), "metric 'M1' declared twice"));
    }
    SUBCASE("metric id shadowing a named constant") {
        json doc = baseline();
        doc["metrics"][0]["id"] = "TCP";
        CHECK(has_issue(issues_of(doc), "shadows a constant"));
    }
    SUBCASE("id reused between metric and feature") {
        json doc = baseline();
        doc["features"][0]["id"] = "M1";
        // Keep the other feature's reference intact so only the clash errors.
        doc["features"][1]["expr"] = "M2 + M3";
        CHECK(has_issue(issues_of(doc), "both a metric and a feature"));
    }
    SUBCASE("dotted metric id rejected") {
        json doc = baseline();
        doc["metrics"][0]["id"] = "ip.src";
        CHECK(has_issue(issues_of(doc), "plain identifier"));
    }
    SUBCASE("reserved table name") {
        json doc = baseline();
        doc["tables"].push_back("related");
        CHECK(has_issue(issues_of(doc), "'related' is reserved"));
    }
}

TEST_CASE("program: metric validation errors") {
    SUBCASE("decaying monitor without tau") {
        json doc = baseline();
        doc["metrics"][2]["monitor"].erase("tau");
        CHECK(has_issue(issues_of(doc), "needs tau > 0"));
    }
    SUBCASE("tau on a counting monitor") {
        json doc = baseline();
        doc["metrics"][1]["monitor"]["tau"] = 5;
        CHECK(has_issue(issues_of(doc), "tau only applies to decaying"));
    }
    SUBCASE("bad monitor kind") {
        json doc = baseline();
        doc["metrics"][1]["monitor"]["kind"] = "averaging";
        CHECK(has_issue(issues_of(doc), "kind must be 'counting' or 'decaying'"));
    }
    SUBCASE("hash width out of range") {
        json doc = baseline();
        doc["metrics"][1]["monitor"]["k"] = 99;
        CHECK(has_issue(issues_of(doc), "k must be in [1, 16]"));
    }
    SUBCASE("chain to unknown parent") {
        json doc = baseline();
        doc["metrics"][2]["chain"] = "M9";
        CHECK(has_issue(issues_of(doc), "chain parent 'M9' does not exist"));
    }
    SUBCASE("chain cycle") {
        json doc = baseline();
        doc["metrics"][1]["chain"] = "M3";  // M2 -> M3 -> M2
        CHECK(has_issue(issues_of(doc), "chain forms a cycle"));
    }
    SUBCASE("negative detector window") {
        json doc = baseline();
        doc["metrics"][0]["detector"]["window"] = -1;
        CHECK(has_issue(issues_of(doc), "window must be >= 0"));
    }
}

TEST_CASE("program: feature validation errors") {
    SUBCASE("self reference") {
        json doc = baseline();
        doc["features"][1]["expr"] = "F1 + 1";
        CHECK(has_issue(issues_of(doc), "references itself"));
    }
    SUBCASE("dependency cycle") {
        json doc = baseline();
        doc["features"][1]["expr"] = "F2 * 2";  // F1 -> F2 -> F1
        auto issues = issues_of(doc);
        CHECK(has_issue(issues, "form a cycle"));
        CHECK(has_issue(issues, "F1"));
        CHECK(has_issue(issues, "F2"));
    }
    SUBCASE("unknown name in expression") {
        json doc = baseline();
        doc["features"][1]["expr"] = "M2 + M9";
        CHECK(has_issue(issues_of(doc), "unknown name 'M9'"));
    }
    SUBCASE("qty cannot read a feature") {
        json doc = baseline();
        doc["states"][0]["on"][0]["mops"][1]["qty"] = "F1";
        CHECK(has_issue(issues_of(doc), "qty cannot reference feature 'F1'"));
    }
    SUBCASE("undeclared table in an expression") {
        json doc = baseline();
        doc["features"][1]["expr"] = "M2 + table[history]";
        CHECK(has_issue(issues_of(doc), "table 'history' is not declared"));
    }
}

TEST_CASE("program: event validation errors") {
    SUBCASE("unknown field in key") {
        json doc = baseline();
        doc["events"][0]["key"] = {"ip.srcc"};
        CHECK(has_issue(issues_of(doc), "unknown field 'ip.srcc'"));
    }
    SUBCASE("non-keyable field in key") {
        json doc = baseline();
        doc["events"][0]["key"] = {"pkt.ts"};
        CHECK(has_issue(issues_of(doc), "cannot be part of a key"));
    }
    SUBCASE("'key' token inside an event key") {
        json doc = baseline();
        doc["events"][0]["key"] = {"key"};
        CHECK(has_issue(issues_of(doc), "cannot appear in an event key"));
    }
    SUBCASE("timeout event with packet attributes") {
        json doc = baseline();
        doc["events"][2]["filter"] = "1";
        CHECK(has_issue(issues_of(doc), "timeout events cannot carry 'filter'"));
    }
    SUBCASE("filter cannot reference metrics") {
        json doc = baseline();
        doc["events"][0]["filter"] = "M1 > 0";
        CHECK(has_issue(issues_of(doc), "unknown name 'M1'"));
    }
    SUBCASE("filter cannot read tables or ctx") {
        json doc = baseline();
        doc["events"][0]["filter"] = "table[prev] + ctx[x]";
        auto issues = issues_of(doc);
        CHECK(has_issue(issues, "filters cannot read tables"));
        CHECK(has_issue(issues, "filters cannot read timeout context"));
    }
    SUBCASE("bad event type") {
        json doc = baseline();
        doc["events"][0]["type"] = "periodic";
        CHECK(has_issue(issues_of(doc), "type must be 'packet' or 'timeout'"));
    }
}

TEST_CASE("program: handler validation errors") {
    SUBCASE("handler for unknown event") {
        json doc = baseline();
        doc["states"][0]["on"][0]["event"] = "E9";
        CHECK(has_issue(issues_of(doc), "event does not exist"));
    }
    SUBCASE("duplicate handler for one event") {
        json doc = baseline();
        doc["states"][0]["on"][1]["event"] = "E1";
        CHECK(has_issue(issues_of(doc), "duplicate handler"));
    }
    SUBCASE("mop without key") {
        json doc = baseline();
        doc["states"][0]["on"][0]["mops"][0].erase("key");
        CHECK(has_issue(issues_of(doc), "needs a non-empty 'key'"));
    }
    SUBCASE("get with qty") {
        json doc = baseline();
        doc["states"][0]["on"][0]["mops"][2]["qty"] = 2;
        CHECK(has_issue(issues_of(doc), "'qty' only applies to set"));
    }
    SUBCASE("get with monitor_key") {
        json doc = baseline();
        doc["states"][0]["on"][0]["mops"][2]["monitor_key"] = {"ip.src"};
        CHECK(has_issue(issues_of(doc), "'monitor_key' only applies to set"));
    }
    SUBCASE("timeout mop with packet fields in key") {
        json doc = baseline();
        doc["states"][1]["on"][1]["mops"][0]["key"] = {"ip.src"};
        CHECK(has_issue(issues_of(doc), "can only use 'key' in key lists"));
    }
    SUBCASE("decision without actions") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"] = json::array();
        CHECK(has_issue(issues_of(doc), "non-empty 'actions'"));
    }
}

TEST_CASE("program: action validation errors") {
    SUBCASE("set_timeout aimed at a packet event") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][1]["timeout"] = "E1";
        CHECK(has_issue(issues_of(doc), "not a timeout event"));
    }
    SUBCASE("set_timeout on unknown event") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][1]["timeout"] = "T9";
        CHECK(has_issue(issues_of(doc), "timeout event 'T9' does not exist"));
    }
    SUBCASE("non-positive delay") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][1]["delay"] = 0;
        CHECK(has_issue(issues_of(doc), "delay must be > 0"));
    }
    SUBCASE("missing delay") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][1].erase("delay");
        CHECK(has_issue(issues_of(doc), "missing 'delay'"));
    }
    SUBCASE("save_timeout_ctx without values") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][2].erase("values");
        CHECK(has_issue(issues_of(doc), "non-empty 'values'"));
    }
    SUBCASE("next_status to unknown state") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][0]["state"] = "gone";
        CHECK(has_issue(issues_of(doc), "state 'gone' does not exist"));
    }
    SUBCASE("update_table on undeclared table") {
        json doc = baseline();
        doc["states"][1]["on"][1]["decisions"][0]["actions"][0]["table"] = "other";
        CHECK(has_issue(issues_of(doc), "table 'other' is not declared"));
    }
    SUBCASE("related update without key") {
        json doc = baseline();
        doc["states"][0]["on"][1]["decisions"][0]["actions"][0].erase("key");
        CHECK(has_issue(issues_of(doc), "needs a 'key' field list"));
    }
    SUBCASE("related update with value") {
        json doc = baseline();
        doc["states"][0]["on"][1]["decisions"][0]["actions"][0]["value"] = "1";
        CHECK(has_issue(issues_of(doc), "stores keys, not values"));
    }
    SUBCASE("value table update with neither value nor delete") {
        json doc = baseline();
        doc["states"][1]["on"][1]["decisions"][0]["actions"][0].erase("value");
        CHECK(has_issue(issues_of(doc), "needs 'value' or 'delete'"));
    }
    SUBCASE("value and delete together") {
        json doc = baseline();
        doc["states"][1]["on"][1]["decisions"][0]["actions"][0]["delete"] = true;
        CHECK(has_issue(issues_of(doc), "mutually exclusive"));
    }
    SUBCASE("export without label") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["actions"][3].erase("label");
        CHECK(has_issue(issues_of(doc), "missing string 'label'"));
    }
    SUBCASE("unknown action name") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][1]["actions"][0]["do"] = "shrug";
        CHECK(has_issue(issues_of(doc), "unknown action 'shrug'"));
    }
}

TEST_CASE("program: parameter errors") {
    SUBCASE("unknown parameter reference") {
        json doc = baseline();
        doc["features"][0]["expr"] = "F1 / ${missing}";
        CHECK(has_issue(issues_of(doc), "unknown parameter 'missing'"));
    }
    SUBCASE("unterminated parameter reference") {
        json doc = baseline();
        doc["features"][0]["expr"] = "F1 / ${horizon";
        CHECK(has_issue(issues_of(doc), "unterminated ${"));
    }
    SUBCASE("non-numeric parameter value") {
        json doc = baseline();
        doc["parameters"]["horizon"] = "fast";
        CHECK(has_issue(issues_of(doc), "parameter 'horizon' must be a number"));
    }
    SUBCASE("numeric leaf that is not a number") {
        json doc = baseline();
        doc["metrics"][0]["detector"]["window"] = "soon";
        CHECK(has_issue(issues_of(doc), "not a number"));
    }
}

TEST_CASE("program: empty sections are rejected") {
    json doc;
    doc["program"] = "empty";
    doc["default_state"] = "s";
    doc["states"] = json::array({json{{"name", "s"}}});
    auto issues = issues_of(doc);
    CHECK(has_issue(issues, "declares no events"));

    json doc2;
    doc2["program"] = "empty";
    doc2["default_state"] = "s";
    doc2["events"] = json::array({json{{"id", "E1"}}});
    CHECK(has_issue(issues_of(doc2), "declares no states"));
}

TEST_CASE("program: warnings for suspicious but legal constructs") {
    SUBCASE("unused metric") {
        json doc = baseline();
        doc["metrics"].push_back(
            json{{"id", "M4"}, {"monitor", {{"kind", "counting"}, {"k", 2}, {"m", 64}}}});
        Program p = parse_program(doc.dump());
        CHECK(has_warning(p, "metric 'M4' is never used"));
    }
    SUBCASE("unhandled event") {
        json doc = baseline();
        doc["events"].push_back(json{{"id", "E3"}, {"key", {"ip.src"}}});
        Program p = parse_program(doc.dump());
        CHECK(has_warning(p, "event 'E3' is never handled"));
    }
    SUBCASE("detector that never rolls over") {
        json doc = baseline();
        doc["metrics"][0]["detector"] = json{{"k", 4}, {"m", 4096}};
        Program p = parse_program(doc.dump());
        CHECK(has_warning(p, "memory never rolls over"));
    }
    SUBCASE("packet field in a timeout condition") {
        json doc = baseline();
        doc["states"][1]["on"][1]["decisions"][0]["when"] = "pkt.len > 100";
        Program p = parse_program(doc.dump());
        CHECK(has_warning(p, "never be available"));
    }
    SUBCASE("ctx read from a packet handler") {
        json doc = baseline();
        doc["states"][0]["on"][0]["decisions"][0]["when"] = "ctx[score] > 1";
        Program p = parse_program(doc.dump());
        CHECK(has_warning(p, "outside a timeout handler"));
    }
}

TEST_CASE("program: malformed JSON raises a syntax error") {
    CHECK_THROWS_AS(parse_program("{"), SyntaxError);
    CHECK_THROWS_AS(parse_program("[1, 2]"), SyntaxError);
    CHECK_THROWS_AS(parse_program(""), SyntaxError);
}

TEST_CASE("program: file loading") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "streamon_prog_test.json";
    {
        std::ofstream out(path);
        out << kBaseline;
    }
    Program p = parse_program_file(path.string());
    CHECK(p.name == "scan_watch");
    fs::remove(path);

    CHECK_THROWS_AS(parse_program_file((fs::temp_directory_path() / "nope.json").string()),
                    ValidationError);
}
