// Command-line front end: replay captures against detection programs,
// generate labelled test captures, and validate program documents.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "streamon/builtins.hpp"
#include "streamon/pcap.hpp"
#include "streamon/program.hpp"
#include "streamon/replay.hpp"
#include "streamon/tracegen.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitProgram = 1;  // bad program document / unknown name
constexpr int kExitInput = 2;    // unreadable capture or file I/O failure

std::map<std::string, double> parse_overrides(const std::vector<std::string>& sets) {
    std::map<std::string, double> out;
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::runtime_error("--set expects name=value, got '" + s + "'");
        size_t used = 0;
        double v = 0;
        try {
            v = std::stod(s.substr(eq + 1), &used);
        } catch (const std::exception&) {
            throw std::runtime_error("--set '" + s + "' has no numeric value");
        }
        if (used != s.size() - eq - 1)
            throw std::runtime_error("--set '" + s + "' has a malformed value");
        out[s.substr(0, eq)] = v;
    }
    return out;
}

// A program reference is either a shipped program's name or a path to a
// JSON document.
streamon::Program load_program(const std::string& ref,
                               const std::map<std::string, double>& overrides) {
    if (streamon::is_builtin(ref)) return streamon::load_builtin(ref, overrides);
    return streamon::parse_program_file(ref, overrides);
}

int cmd_run(const std::string& program_ref, const std::vector<std::string>& sets,
            const std::string& pcap_path, const std::string& alerts_path,
            const std::string& report_path, int shards, bool paced, double drain) {
    streamon::Program prog;
    try {
        prog = load_program(program_ref, parse_overrides(sets));
    } catch (const streamon::SyntaxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProgram;
    } catch (const streamon::ValidationError& e) {
        std::cerr << "error: invalid program\n" << e.what() << "\n";
        return kExitProgram;
    }
    for (const auto& w : prog.warnings) std::cerr << "warning: " << w << "\n";

    std::ofstream alerts_file;
    std::ostream* alerts_out = &std::cout;
    if (!alerts_path.empty() && alerts_path != "-") {
        alerts_file.open(alerts_path, std::ios::binary | std::ios::trunc);
        if (!alerts_file) {
            std::cerr << "error: cannot write " << alerts_path << "\n";
            return kExitInput;
        }
        alerts_out = &alerts_file;
    }

    streamon::ReplayOptions opts;
    opts.shards = shards;
    opts.paced = paced;
    opts.drain = drain;

    streamon::ReplayResult res;
    try {
        res = streamon::run_replay(prog, pcap_path, alerts_out, opts);
    } catch (const streamon::PcapError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (alerts_file.is_open()) {
        alerts_file.close();
        if (!alerts_file) {
            std::cerr << "error: short write to " << alerts_path << "\n";
            return kExitInput;
        }
    }

    auto report = streamon::replay_report(prog, pcap_path, res);
    if (!report_path.empty()) {
        std::ofstream rf(report_path, std::ios::binary | std::ios::trunc);
        rf << report.dump(2) << "\n";
        if (!rf) {
            std::cerr << "error: cannot write " << report_path << "\n";
            return kExitInput;
        }
    }
    std::cerr << prog.name << ": " << res.frames << " packets, " << res.alerts << " alerts, "
              << res.census.size() << " states occupied, "
              << static_cast<long long>(res.wall_seconds * 1000) << " ms\n";
    return kExitOk;
}

int cmd_gen(const std::string& scenario, uint64_t seed, const std::string& out_path,
            double duration, std::string truth_path, bool no_truth) {
    streamon::Scenario sc;
    try {
        sc = streamon::generate_scenario(scenario, seed, duration);
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProgram;
    }
    if (no_truth)
        truth_path.clear();
    else if (truth_path.empty())
        truth_path = out_path + ".truth.json";
    try {
        streamon::write_scenario(sc, out_path, truth_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    std::cerr << sc.name << ": " << sc.frames.size() << " packets -> " << out_path;
    if (!truth_path.empty()) std::cerr << " (truth: " << truth_path << ")";
    std::cerr << "\n";
    return kExitOk;
}

int cmd_validate(const std::string& program_ref, const std::vector<std::string>& sets,
                 bool strict) {
    streamon::Program prog;
    try {
        prog = load_program(program_ref, parse_overrides(sets));
    } catch (const streamon::SyntaxError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProgram;
    } catch (const streamon::ValidationError& e) {
        std::cerr << "error: invalid program\n" << e.what() << "\n";
        return kExitProgram;
    }
    for (const auto& w : prog.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << prog.name << ": ok (" << prog.metrics.size() << " metrics, "
              << prog.features.size() << " features, " << prog.events.size() << " events, "
              << prog.states.size() << " states)\n";
    if (strict && !prog.warnings.empty()) {
        std::cerr << "error: warnings present and --strict given\n";
        return kExitProgram;
    }
    return kExitOk;
}

int cmd_list() {
    std::cout << "programs:\n";
    for (const auto& name : streamon::list_builtins()) std::cout << "  " << name << "\n";
    std::cout << "scenarios:\n";
    for (const auto& name : streamon::list_scenarios()) std::cout << "  " << name << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streamon - stream monitoring engine"};
    app.require_subcommand(1);

    // run
    std::string program_ref, pcap_path, alerts_path = "-", report_path;
    std::vector<std::string> sets;
    int shards = 1;
    bool paced = false;
    double drain = 600.0;
    auto* run = app.add_subcommand("run", "Replay a capture against a program");
    run->add_option("--program,-p", program_ref,
                    "Program document path or shipped program name")
        ->required();
    run->add_option("--pcap,-r", pcap_path, "Capture file to replay")->required();
    run->add_option("--alerts,-a", alerts_path,
                    "Write alert JSON lines here ('-' = stdout)");
    run->add_option("--report", report_path, "Write a JSON run summary here");
    run->add_option("--set", sets, "Override a program parameter (name=value)");
    run->add_option("--shards", shards, "Partition flows across N engines")
        ->check(CLI::Range(1, 256));
    run->add_flag("--paced", paced, "Replay at the capture's own pace");
    run->add_option("--drain", drain,
                    "Virtual seconds past the last packet to let timers fire")
        ->check(CLI::NonNegativeNumber);

    // gen
    std::string scenario, out_path, truth_path;
    uint64_t seed = 1;
    double duration = 0.0;
    bool no_truth = false;
    auto* gen = app.add_subcommand("gen", "Generate a labelled test capture");
    gen->add_option("--scenario,-s", scenario, "Scenario name (see 'list')")->required();
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--out,-o", out_path, "Capture file to write")->required();
    gen->add_option("--duration", duration,
                    "Extend background traffic to at least this many seconds");
    gen->add_option("--truth", truth_path,
                    "Ground-truth sidecar path (default: <out>.truth.json)");
    gen->add_flag("--no-truth", no_truth, "Skip the ground-truth sidecar");

    // validate
    std::string val_ref;
    std::vector<std::string> val_sets;
    bool strict = false;
    auto* val = app.add_subcommand("validate", "Parse and validate a program document");
    val->add_option("--program,-p", val_ref, "Program document path or shipped program name")
        ->required();
    val->add_option("--set", val_sets, "Override a program parameter (name=value)");
    val->add_flag("--strict", strict, "Treat warnings as errors");

    auto* lst = app.add_subcommand("list", "List shipped programs and scenarios");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(program_ref, sets, pcap_path, alerts_path, report_path, shards,
                           paced, drain);
        if (gen->parsed()) return cmd_gen(scenario, seed, out_path, duration, truth_path, no_truth);
        if (val->parsed()) return cmd_validate(val_ref, val_sets, strict);
        if (lst->parsed()) return cmd_list();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProgram;
    }
    return kExitOk;
}
