#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "streamon/builtins.hpp"
#include "streamon/tracegen.hpp"

using nlohmann::ordered_json;

namespace {

struct CmdResult {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the installed binary with the given arguments, capturing both streams.
CmdResult run_cli(const std::string& args) {
    const std::string out_f = "./cli_out.txt";
    const std::string err_f = "./cli_err.txt";
    std::string cmd = std::string(STREAMON_CLI_PATH) + " " + args + " >" + out_f + " 2>" + err_f;
    int rc = std::system(cmd.c_str());
    CmdResult r;
    r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_f);
    r.err = slurp(err_f);
    std::remove(out_f.c_str());
    std::remove(err_f.c_str());
    return r;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

std::vector<ordered_json> parse_lines(const std::string& text) {
    std::vector<ordered_json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(ordered_json::parse(line));
    }
    return out;
}

}  // namespace

TEST_CASE("cli: list names every shipped program and scenario") {
    CmdResult r = run_cli("list");
    REQUIRE(r.status == 0);
    for (const auto& name : streamon::list_builtins()) CHECK(contains(r.out, name));
    for (const auto& name : streamon::list_scenarios()) CHECK(contains(r.out, name));
}

TEST_CASE("cli: every shipped program validates cleanly") {
    for (const auto& name : streamon::list_builtins()) {
        CAPTURE(name);
        CmdResult r = run_cli("validate --strict --program " + name);
        CHECK(r.status == 0);
        CHECK(contains(r.out, "ok"));
        CHECK(r.err.empty());
    }
}

TEST_CASE("cli: broken program documents exit with status 1") {
    CmdResult missing = run_cli("validate --program ./no_such_program.json");
    CHECK(missing.status == 1);

    const std::string bad = "./cli_bad_program.json";
    {
        std::ofstream f(bad);
        // References a metric that is never declared.
        f << R"({"program": "bad", "default_state": "d",
                 "features": [{"id": "F", "expr": "ghost_metric + 1"}],
                 "events": [{"id": "E", "key": ["ip.src"]}],
                 "states": [{"name": "d"}]})";
    }
    CmdResult invalid = run_cli("validate --program " + bad);
    CHECK(invalid.status == 1);
    CHECK(contains(invalid.err, "invalid program"));
    std::remove(bad.c_str());
}

TEST_CASE("cli: gen then run reproduces the scenario's ground truth") {
    const std::string pcap = "./cli_conficker.pcap";
    const std::string truth_path = pcap + ".truth.json";
    CmdResult gen = run_cli("gen --scenario conficker --seed 42 --out " + pcap);
    REQUIRE(gen.status == 0);
    ordered_json truth = ordered_json::parse(slurp(truth_path));

    const std::string alerts = "./cli_alerts.jsonl";
    const std::string report = "./cli_report.json";
    CmdResult run = run_cli("run --program conficker --pcap " + pcap + " --alerts " + alerts +
                            " --report " + report);
    REQUIRE(run.status == 0);

    ordered_json rep = ordered_json::parse(slurp(report));
    CHECK(rep.at("program") == "conficker");
    CHECK(rep.at("frames").get<uint64_t>() == truth.at("packets").get<uint64_t>());
    CHECK(rep.at("census").at("infected").get<uint64_t>() == 1);
    CHECK(rep.at("counters").at("malformed").get<uint64_t>() == 0);

    auto lines = parse_lines(slurp(alerts));
    const auto& expected = truth.at("expected").at("alerts");
    REQUIRE(lines.size() == expected.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        CHECK(lines[i].at("label") == expected[i].at("label"));
        CHECK(lines[i].at("key") == expected[i].at("key"));
    }

    SUBCASE("alert output is byte-identical across runs") {
        const std::string again = "./cli_alerts_again.jsonl";
        CmdResult rerun = run_cli("run --program conficker --pcap " + pcap + " --alerts " + again);
        REQUIRE(rerun.status == 0);
        CHECK(slurp(alerts) == slurp(again));
        std::remove(again.c_str());
    }

    SUBCASE("sharded runs produce the same alert stream") {
        const std::string sharded = "./cli_alerts_sharded.jsonl";
        CmdResult rerun = run_cli("run --shards 3 --program conficker --pcap " + pcap +
                                  " --alerts " + sharded);
        REQUIRE(rerun.status == 0);
        CHECK(slurp(alerts) == slurp(sharded));
        std::remove(sharded.c_str());
    }

    SUBCASE("parameter overrides change the verdict threshold") {
        // An impossible NXDOMAIN ratio bound keeps every host unsuspected.
        const std::string quiet = "./cli_alerts_quiet.jsonl";
        CmdResult rerun = run_cli("run --program conficker --set nx_threshold=2 --pcap " + pcap +
                                  " --alerts " + quiet);
        REQUIRE(rerun.status == 0);
        CHECK(slurp(quiet).empty());
        std::remove(quiet.c_str());
    }

    std::remove(alerts.c_str());
    std::remove(report.c_str());
    std::remove(pcap.c_str());
    std::remove(truth_path.c_str());
}

TEST_CASE("cli: unreadable captures exit with status 2") {
    CmdResult r = run_cli("run --program portknock --pcap ./no_such_capture.pcap");
    CHECK(r.status == 2);
}

TEST_CASE("cli: gen options control the sidecar") {
    const std::string pcap = "./cli_nt.pcap";
    CmdResult r = run_cli("gen --scenario entropy --seed 3 --out " + pcap + " --no-truth");
    REQUIRE(r.status == 0);
    CHECK(!slurp(pcap).empty());
    CHECK(slurp(pcap + ".truth.json").empty());

    CmdResult unknown = run_cli("gen --scenario mystery --seed 3 --out " + pcap);
    CHECK(unknown.status == 1);
    std::remove(pcap.c_str());
}
