#include "streamon/tracegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "streamon/builtins.hpp"
#include "streamon/frame.hpp"
#include "streamon/pcap.hpp"
#include "streamon/program.hpp"
#include "streamon/rng.hpp"
#include "streamon/sketch.hpp"

namespace streamon {

using nlohmann::ordered_json;

double quantize_capture_ts(double ts) {
    // Mirrors the capture writer (truncate seconds, round microseconds with
    // carry) followed by the reader (sec + usec * 1e-6).
    uint32_t sec = static_cast<uint32_t>(ts);
    uint32_t usec = static_cast<uint32_t>((ts - sec) * 1e6 + 0.5);
    if (usec >= 1000000) {
        ++sec;
        usec -= 1000000;
    }
    return static_cast<double>(sec) + static_cast<double>(usec) * 1e-6;
}

namespace {

std::string dotted(uint32_t ip) {
    return std::to_string((ip >> 24) & 0xff) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

Bytes ip_key(uint32_t ip) {
    return Bytes{static_cast<uint8_t>(ip >> 24), static_cast<uint8_t>(ip >> 16),
                 static_cast<uint8_t>(ip >> 8), static_cast<uint8_t>(ip)};
}

Bytes pair_key(uint32_t a, uint32_t b) {
    Bytes k = ip_key(a);
    Bytes t = ip_key(b);
    k.insert(k.end(), t.begin(), t.end());
    return k;
}

// Collects frames with timestamps already on the capture file's microsecond
// grid; sort() makes emission order irrelevant while keeping frames that land
// on the same microsecond in emission order.
struct TraceBuilder {
    std::vector<std::pair<double, Bytes>> frames;

    double add(double ts, Bytes frame) {
        double q = quantize_capture_ts(ts);
        frames.emplace_back(q, std::move(frame));
        return q;
    }

    void sort() {
        std::stable_sort(frames.begin(), frames.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
    }
};

// Fresh sketch with the exact configuration a shipped program declares, so
// scenario ground truth inherits the very same arithmetic the engine runs.
MultiHashMetric metric_clone(const Program& prog, const std::string& id) {
    const auto& spec = prog.metrics[static_cast<size_t>(prog.metric_slot(id))];
    return MultiHashMetric(spec.detector, spec.monitor);
}

Bytes random_payload(Rng& rng, size_t len) {
    Bytes p(len);
    for (auto& b : p) b = rng.byte();
    return p;
}

Bytes ascii_payload(Rng& rng, size_t len) {
    Bytes p(len);
    for (auto& b : p) b = static_cast<uint8_t>(0x20 + rng.uniform(95));
    return p;
}

std::string random_label(Rng& rng, size_t len) {
    std::string s;
    for (size_t i = 0; i < len; ++i)
        s += static_cast<char>('a' + rng.uniform(26));
    return s;
}

// Idle filler past a scenario's natural end; plain UDP that matches none of
// the shipped programs' packet filters (no SYN flag, not port 53, short).
void add_background_tail(TraceBuilder& tb, uint64_t seed, double from, double until) {
    if (until <= from) return;
    Rng rng(seed);
    Bytes pad(64, 0x2e);
    double t = from;
    for (;;) {
        t += rng.exponential(2.0);
        if (t >= until) break;
        tb.add(t, make_udp_frame(ipv4(10, 0, 250, 1), ipv4(10, 0, 250, 2), 41000, 9000, pad));
    }
}

[[noreturn]] void self_check_failed(const std::string& what) {
    throw std::logic_error("scenario self-check failed: " + what);
}

// ---------------------------------------------------------------------------
// portknock: one client performs the full knock sequence and connects, one
// abandons it mid-way, one scans fast enough to trip the rate threshold and
// gets blocked for the configured interval. Probes straddle the release
// instant at +/-0.5 s.
// ---------------------------------------------------------------------------

Scenario portknock_scenario(uint64_t seed, double duration) {
    Program prog = load_builtin("portknock");
    const double threshold = prog.parameters.at("rate_threshold");
    const double window = prog.parameters.at("knock_window");
    const double block = prog.parameters.at("block_seconds");
    const double tau = prog.parameters.at("rate_tau");
    const auto p1 = static_cast<uint16_t>(prog.parameters.at("knock1_port"));
    const auto p2 = static_cast<uint16_t>(prog.parameters.at("knock2_port"));
    const auto p3 = static_cast<uint16_t>(prog.parameters.at("knock3_port"));
    const auto ssh = static_cast<uint16_t>(prog.parameters.at("service_port"));

    const uint32_t server = ipv4(10, 0, 0, 1);
    const uint32_t knocker = ipv4(10, 0, 0, 10);
    const uint32_t rollback = ipv4(10, 0, 0, 11);
    const uint32_t scanner = ipv4(10, 0, 0, 66);

    TraceBuilder tb;
    struct SynRec {
        double ts;
        uint32_t src;
        uint16_t dport;
    };
    std::vector<SynRec> syns;
    auto syn = [&](double ts, uint32_t src, uint16_t sport, uint16_t dport) {
        double q = tb.add(ts, make_tcp_frame(src, server, sport, dport, kTcpSyn, 1, {}));
        syns.push_back({q, src, dport});
        return q;
    };

    // the well-behaved client: full sequence, then two service connects
    syn(20.0, knocker, 40001, p1);
    syn(21.5, knocker, 40002, p2);
    syn(23.0, knocker, 40003, p3);
    syn(25.0, knocker, 40004, ssh);
    syn(26.0, knocker, 40005, ssh);

    // half a sequence; the second knock misses the window and is ignored
    syn(30.0, rollback, 41001, p1);
    syn(36.0, rollback, 41002, p2);

    // the scan: 60 ports at 100 SYN/s
    const double scan_start = 50.0;
    const int scan_count = 60;
    for (int i = 0; i < scan_count; ++i)
        syn(scan_start + 0.01 * i, scanner, 42000, static_cast<uint16_t>(1000 + i));

    // background: three hosts connecting to an unrelated service, plus UDP
    {
        Rng rng(derive_seed(seed, 1));
        for (int h = 0; h < 3; ++h) {
            uint32_t src = ipv4(10, 0, 1, static_cast<uint8_t>(1 + h));
            double t = 0.4 + 0.37 * h;
            while (true) {
                t += rng.exponential(2.5);
                if (t >= 180.0) break;
                syn(t, src, static_cast<uint16_t>(43000 + h), 8000);
                tb.add(t + 0.031, make_udp_frame(src, ipv4(10, 0, 9, 9),
                                                 static_cast<uint16_t>(43100 + h), 9000,
                                                 random_payload(rng, 48)));
            }
        }
    }

    // ground-truth machine: the designed knock automaton over the program's
    // own sketch configuration
    struct Host {
        int st = 0;  // 0 default, 1 knock1, 2 knock2, 3 allowed, 4 blocked
        double knock_exp = -1.0;
        double release = -1.0;
    };
    struct Sim {
        MultiHashMetric rate;
        double threshold, window, block;
        uint16_t p1, p2, p3, ssh;
        std::map<uint32_t, Host> hosts;
        int drops = 0, allows = 0;
        std::vector<std::pair<double, uint32_t>> blocks;

        void fire_timeouts(double now) {
            for (auto& [src, h] : hosts) {
                if (h.knock_exp >= 0 && h.knock_exp <= now) {
                    if (h.st == 1 || h.st == 2) h.st = 0;
                    h.knock_exp = -1.0;  // stale in any other state
                }
                if (h.release >= 0 && h.release <= now) {
                    if (h.st == 4) h.st = 0;
                    h.release = -1.0;
                }
            }
        }
        void packet(double ts, uint32_t src, uint16_t dport) {
            fire_timeouts(ts);
            rate.set(ip_key(src), {}, ts, 1.0);
            double bound = rate.get(ip_key(src), ts);
            Host& h = hosts[src];
            if (h.st == 4) {
                ++drops;
                return;
            }
            if (bound > threshold) {
                h.st = 4;
                h.release = ts + block;
                blocks.emplace_back(ts, src);
                ++drops;
                return;
            }
            if (h.st == 0 && dport == p1) {
                h.st = 1;
                h.knock_exp = ts + window;
            } else if (h.st == 1 && dport == p2) {
                h.st = 2;
                h.knock_exp = ts + window;
            } else if (h.st == 2 && dport == p3) {
                h.st = 3;
            } else if (h.st == 3 && dport == ssh) {
                ++allows;
            }
        }
    };

    auto run_sim = [&](const std::vector<SynRec>& recs) {
        Sim sim{metric_clone(prog, "syn_rate"), threshold, window, block,
                p1,  p2,   p3,  ssh, {},    0,     0,      {}};
        std::vector<SynRec> sorted = recs;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const SynRec& a, const SynRec& b) { return a.ts < b.ts; });
        for (const auto& r : sorted) sim.packet(r.ts, r.src, r.dport);
        sim.fire_timeouts(1e18);
        return sim;
    };

    // first pass locates the block instant so the probes can straddle release
    Sim pass1 = run_sim(syns);
    if (pass1.blocks.size() != 1 || pass1.blocks[0].second != scanner)
        self_check_failed("portknock: expected exactly one block, of the scanner");
    const double t_block = pass1.blocks[0].first;

    // closed form for the crossing index: after n SYNs at spacing d the
    // decayed sum is (1 - r^n) / (1 - r) with r = exp(-d / tau)
    {
        double r = std::exp(-0.01 / tau);
        double v = 0.0;
        int n = 0;
        while (n < scan_count) {
            v = v * r + 1.0;
            ++n;
            if (v > threshold) break;
        }
        double expect = quantize_capture_ts(scan_start + 0.01 * (n - 1));
        if (std::abs(expect - t_block) > 1e-9)
            self_check_failed("portknock: analytic crossing disagrees with sketch replay");
    }

    double probe_blocked = syn(t_block + block - 0.5, scanner, 42001, 1000);
    double probe_released = syn(t_block + block + 0.5, scanner, 42002, 1000);

    Sim final = run_sim(syns);
    int allowed_hosts = 0, nondefault = 0;
    for (const auto& [src, h] : final.hosts) {
        if (h.st == 3) ++allowed_hosts;
        if (h.st != 0 && h.st != 3) ++nondefault;
    }
    if (allowed_hosts != 1 || nondefault != 0)
        self_check_failed("portknock: final census is not {allowed: 1}");
    if (final.allows != 2) self_check_failed("portknock: expected two service connects");

    tb.sort();
    ordered_json truth;
    truth["scenario"] = "portknock";
    truth["seed"] = seed;
    truth["program"] = "portknock";
    truth["hosts"] = {{"server", dotted(server)},
                      {"knocker", dotted(knocker)},
                      {"rollback", dotted(rollback)},
                      {"scanner", dotted(scanner)}};
    ordered_json ex;
    ex["final_census"] = {{"allowed", 1}};
    ex["alerts"] = ordered_json::array(
        {{{"label", "port-scan-blocked"}, {"clock", t_block}, {"key", dotted(scanner)}}});
    ex["block_clock"] = t_block;
    ex["release_clock"] = t_block + block;
    ex["blocked_probe_clock"] = probe_blocked;
    ex["released_probe_clock"] = probe_released;
    ex["drop_count"] = final.drops;
    ex["allow_count"] = final.allows;
    truth["expected"] = ex;

    add_background_tail(tb, derive_seed(seed, 99), 181.0, duration);
    if (duration > 0) tb.sort();
    truth["packets"] = tb.frames.size();
    return Scenario{"portknock", std::move(tb.frames), std::move(truth)};
}

// ---------------------------------------------------------------------------
// conficker: the infected host resolves a couple of real names, then a burst
// of nonsense names that bounce, then sweeps port 445 and mostly gets no
// answer. The clean host does a reverse-lookup burst (all answered) and a few
// good connections to the file server.
// ---------------------------------------------------------------------------

Scenario conficker_scenario(uint64_t seed, double duration) {
    Program prog = load_builtin("conficker");
    const double min_q = prog.parameters.at("min_queries");
    const double nx_thr = prog.parameters.at("nx_threshold");
    const double delay = prog.parameters.at("verdict_delay");
    const double ans_thr = prog.parameters.at("answer_threshold");

    const uint32_t dns = ipv4(10, 0, 3, 53);
    const uint32_t fileserver = ipv4(10, 0, 2, 20);
    const uint32_t infected = ipv4(10, 0, 0, 77);
    const uint32_t clean = ipv4(10, 0, 0, 88);

    TraceBuilder tb;
    Rng names(derive_seed(seed, 2));

    struct Ev {
        double ts;
        int kind;  // 0 query, 1 nx answer, 2 scan syn, 3 scan answer
        uint32_t host;
    };
    std::vector<Ev> evs;

    uint16_t txid = 100;
    auto query = [&](double ts, uint32_t src, uint16_t sport, bool nx) {
        std::string qname = random_label(names, 12) + (nx ? ".example" : ".local");
        double q = tb.add(ts, make_dns_query(src, dns, sport, txid, qname, 1));
        evs.push_back({q, 0, src});
        double r = tb.add(ts + 0.05, make_dns_response(dns, src, sport, txid, qname, 1,
                                                       nx ? 3 : 0, nx ? 0 : 1));
        if (nx) evs.push_back({r, 1, src});
        ++txid;
    };

    // infected: two answered queries, then bounced ones
    query(10.0, infected, 34001, false);
    query(10.6, infected, 34002, false);
    for (int i = 0; i < 4; ++i) query(11.2 + 0.6 * i, infected, static_cast<uint16_t>(34003 + i), true);

    // infected: 445 sweep, 30 targets, answers from two of them
    for (int i = 0; i < 30; ++i) {
        uint32_t target = ipv4(10, 0, 2, static_cast<uint8_t>(30 + i));
        auto sport = static_cast<uint16_t>(45000 + i);
        double t = tb.add(15.0 + 0.3 * i, make_tcp_frame(infected, target, sport, 445, kTcpSyn, 1, {}));
        evs.push_back({t, 2, infected});
        if (i == 3 || i == 7) {
            double r = tb.add(15.0 + 0.3 * i + 0.05,
                              make_tcp_frame(target, infected, 445, sport, kTcpSyn | kTcpAck, 1, {}));
            evs.push_back({r, 3, infected});
        }
    }

    // clean: reverse-lookup burst with a few misses — enough to look
    // suspicious, so the second stage has a discrimination to make
    for (int i = 0; i < 12; ++i) {
        bool nx = (i % 3) == 2;
        query(20.0 + 0.5 * i, clean, static_cast<uint16_t>(46000 + i), nx);
    }

    // clean: five answered connections to the file server
    for (int i = 0; i < 5; ++i) {
        auto sport = static_cast<uint16_t>(47000 + i);
        double t = tb.add(25.0 + 1.0 * i, make_tcp_frame(clean, fileserver, sport, 445, kTcpSyn, 1, {}));
        evs.push_back({t, 2, clean});
        double r = tb.add(25.0 + 1.0 * i + 0.05,
                          make_tcp_frame(fileserver, clean, 445, sport, kTcpSyn | kTcpAck, 1, {}));
        evs.push_back({r, 3, clean});
    }

    // background web chatter, no DNS and no port 445
    {
        Rng rng(derive_seed(seed, 3));
        for (int h = 0; h < 2; ++h) {
            uint32_t src = ipv4(10, 0, 1, static_cast<uint8_t>(10 + h));
            double t = 0.9 + 0.51 * h;
            while (true) {
                t += rng.exponential(3.0);
                if (t >= 60.0) break;
                tb.add(t, make_tcp_frame(src, ipv4(10, 0, 9, 9), static_cast<uint16_t>(48000 + h),
                                         80, kTcpSyn, 1, {}));
                tb.add(t + 0.04, make_tcp_frame(ipv4(10, 0, 9, 9), src, 80,
                                                static_cast<uint16_t>(48000 + h),
                                                kTcpSyn | kTcpAck, 1, {}));
            }
        }
    }

    // ground truth: the two-stage suspicion machine over the program's own
    // sketch configuration
    auto mq = metric_clone(prog, "q_count");
    auto mnx = metric_clone(prog, "nx_count");
    auto msyn = metric_clone(prog, "syn_count");
    auto msack = metric_clone(prog, "synack_count");

    struct Host {
        int st = 0;  // 0 default, 1 suspected, 2 infected
        double verdict_at = -1.0;
    };
    std::map<uint32_t, Host> hosts;
    ordered_json alerts = ordered_json::array();
    ordered_json trajectory = ordered_json::array();

    auto fire_verdicts = [&](double now) {
        // collect due verdicts first so they resolve in clock order
        std::vector<std::pair<double, uint32_t>> due;
        for (auto& [ip, h] : hosts) {
            if (h.verdict_at >= 0 && h.verdict_at <= now && h.st == 1)
                due.emplace_back(h.verdict_at, ip);
        }
        std::sort(due.begin(), due.end());
        for (const auto& [tc, ip] : due) {
            Host& h = hosts[ip];
            h.verdict_at = -1.0;
            double sv = msyn.get(ip_key(ip), tc);
            double sa = msack.get(ip_key(ip), tc);
            if (sv > 0 && sa / sv < ans_thr) {
                h.st = 2;
                alerts.push_back({{"label", "scanner-confirmed"}, {"clock", tc}, {"key", dotted(ip)}});
                trajectory.push_back({{"state", "infected"}, {"clock", tc}, {"key", dotted(ip)}});
            } else {
                h.st = 0;
                trajectory.push_back({{"state", "default"}, {"clock", tc}, {"key", dotted(ip)}});
            }
        }
    };

    std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) { return a.ts < b.ts; });
    for (const auto& e : evs) {
        fire_verdicts(e.ts);
        Bytes k = ip_key(e.host);
        Host& h = hosts[e.host];
        switch (e.kind) {
            case 0: mq.set(k, {}, e.ts, 1.0); break;
            case 1: {
                mnx.set(k, {}, e.ts, 1.0);
                double qv = mq.get(k, e.ts);
                double nv = mnx.get(k, e.ts);
                if (h.st == 0 && qv > min_q && nv / qv > nx_thr) {
                    h.st = 1;
                    h.verdict_at = e.ts + delay;
                    alerts.push_back({{"label", "dns-anomaly"}, {"clock", e.ts}, {"key", dotted(e.host)}});
                    trajectory.push_back({{"state", "suspected"}, {"clock", e.ts}, {"key", dotted(e.host)}});
                }
                break;
            }
            case 2: msyn.set(k, {}, e.ts, 1.0); break;
            case 3: msack.set(k, {}, e.ts, 1.0); break;
        }
    }
    fire_verdicts(1e18);

    if (alerts.size() != 3) self_check_failed("conficker: expected three alerts");
    if (hosts[infected].st != 2) self_check_failed("conficker: infected host not confirmed");
    if (hosts[clean].st != 0) self_check_failed("conficker: clean host not back in default");
    int clean_moves = 0;
    for (const auto& t : trajectory)
        if (t.at("key") == dotted(clean)) ++clean_moves;
    if (clean_moves != 2) self_check_failed("conficker: clean host must be suspected then cleared");

    tb.sort();
    ordered_json truth;
    truth["scenario"] = "conficker";
    truth["seed"] = seed;
    truth["program"] = "conficker";
    truth["hosts"] = {{"infected", dotted(infected)}, {"clean", dotted(clean)}};
    ordered_json ex;
    ex["final_census"] = {{"infected", 1}};
    ex["alerts"] = alerts;
    ex["trajectory"] = trajectory;
    truth["expected"] = ex;

    add_background_tail(tb, derive_seed(seed, 99), 61.0, duration);
    if (duration > 0) tb.sort();
    truth["packets"] = tb.frames.size();
    return Scenario{"conficker", std::move(tb.frames), std::move(truth)};
}

// ---------------------------------------------------------------------------
// ddos: a SYN flood toward one victim ramps through three rates; the rate
// check crosses the threshold, two growth checks confirm, and during the
// attack a long-standing client keeps getting through while spoofed sources
// are shed. After the flood stops the periodic check releases the victim.
// ---------------------------------------------------------------------------

Scenario ddos_scenario(uint64_t seed, double duration) {
    Program prog = load_builtin("ddos");
    const double thr = prog.parameters.at("syn_threshold");
    const double growth = prog.parameters.at("growth_factor");
    const double release = prog.parameters.at("release_threshold");
    const double period = prog.parameters.at("check_period");
    const double client_min = prog.parameters.at("client_min");

    const uint32_t victim = ipv4(10, 0, 4, 10);
    const uint32_t client_a = ipv4(10, 0, 0, 5);
    const uint32_t client_b = ipv4(10, 0, 0, 6);
    const double span = duration > 900.0 ? duration : 900.0;

    TraceBuilder tb;
    struct SynRec {
        double ts;
        uint32_t src;
        int cls;  // 0 established client, 1 late client, 2 flood
    };
    std::vector<SynRec> syns;

    auto client_syn = [&](double ts, uint32_t src, uint16_t sport, int cls) {
        double q = tb.add(ts, make_tcp_frame(src, victim, sport, 80, kTcpSyn, 1, {}));
        syns.push_back({q, src, cls});
        tb.add(ts + 0.021, make_tcp_frame(victim, src, 80, sport, kTcpSyn | kTcpAck, 1, {}));
    };

    for (double t = 0.013; t < span; t += 6.0) client_syn(t, client_a, 48000, 0);
    for (double t = 340.017; t < span; t += 6.0) client_syn(t, client_b, 48100, 1);

    // flood: 2/s, then 4/s, then 8/s, each source address used exactly once
    {
        int i = 0;
        auto flood = [&](double from, double to, double step) {
            for (double t = from; t < to; t += step, ++i) {
                uint32_t src = ipv4(172, 16, static_cast<uint8_t>(1 + i / 200),
                                    static_cast<uint8_t>(1 + i % 200));
                double q = tb.add(t, make_tcp_frame(src, victim, static_cast<uint16_t>(50000 + i % 10000),
                                                    80, kTcpSyn, 1, {}));
                syns.push_back({q, src, 2});
            }
        };
        flood(140.0, 200.0, 0.5);
        flood(200.0, 260.0, 0.25);
        flood(260.0, 440.0, 0.125);
    }

    // seeded UDP chatter; carries no SYN flag so it never reaches the rate
    // machine, but it varies the capture between seeds
    {
        Rng rng(derive_seed(seed, 7));
        double t = 0.3;
        while (true) {
            t += rng.exponential(5.0);
            if (t >= span) break;
            tb.add(t, make_udp_frame(ipv4(10, 0, 1, 30), ipv4(10, 0, 9, 9), 49000, 9000,
                                     random_payload(rng, 120)));
        }
    }

    std::stable_sort(syns.begin(), syns.end(),
                     [](const SynRec& a, const SynRec& b) { return a.ts < b.ts; });

    // ground truth: rate machine over the program's own sketches
    auto rate = metric_clone(prog, "syn_rate");
    auto hist = metric_clone(prog, "client_hist");
    const Bytes vkey = ip_key(victim);

    int state = 0;  // 0 default, 1 monitored, 2 attack
    double prev = 0.0;
    bool growing = false;
    double check_at = -1.0;
    double t_mon = -1.0, t_att = -1.0, t_rel = -1.0;
    int allow_count = 0, drop_count = 0, b_drops = 0, flood_drops = 0;
    ordered_json alerts = ordered_json::array();

    auto fire_check = [&](double tc) {
        double q = rate.get(vkey, tc);
        if (state == 1) {
            if (q > prev * growth && growing) {
                state = 2;
                prev = q;
                check_at = tc + period;
                t_att = tc;
                alerts.push_back({{"label", "syn-flood-confirmed"}, {"clock", tc}, {"key", dotted(victim)}});
            } else if (q > prev * growth) {
                growing = true;
                prev = q;
                check_at = tc + period;
            } else {
                state = 0;
                check_at = -1.0;
            }
        } else if (state == 2) {
            if (q < release) {
                state = 0;
                check_at = -1.0;
                t_rel = tc;
                alerts.push_back({{"label", "flood-subsided"}, {"clock", tc}, {"key", dotted(victim)}});
            } else {
                check_at = tc + period;
            }
        }
    };

    for (const auto& r : syns) {
        while (check_at >= 0 && check_at <= r.ts) fire_check(check_at);
        rate.set(vkey, {}, r.ts, 1.0);
        double bound = rate.get(vkey, r.ts);
        if (state == 2) {
            double hv = hist.get(pair_key(r.src, victim), r.ts);
            if (hv > client_min) {
                ++allow_count;
                if (r.cls != 0) self_check_failed("ddos: a flood or late source passed the history gate");
            } else {
                ++drop_count;
                if (r.cls == 0) self_check_failed("ddos: the established client was shed");
                if (r.cls == 1) ++b_drops;
                if (r.cls == 2) ++flood_drops;
            }
        } else {
            hist.set(pair_key(r.src, victim), {}, r.ts, 1.0);
            if (state == 0 && bound > thr) {
                state = 1;
                prev = bound;
                growing = false;
                check_at = r.ts + period;
                t_mon = r.ts;
                alerts.push_back({{"label", "syn-rate-elevated"}, {"clock", r.ts}, {"key", dotted(victim)}});
            }
        }
    }
    double last_ts = syns.back().ts;
    while (check_at >= 0 && check_at <= last_ts) fire_check(check_at);

    if (t_mon < 0 || t_att < 0 || t_rel < 0) self_check_failed("ddos: escalation did not complete");
    if (alerts.size() != 3) self_check_failed("ddos: expected exactly three alerts");
    if (state != 0) self_check_failed("ddos: victim not released by the end of the trace");
    if (b_drops == 0 || flood_drops == 0 || allow_count == 0)
        self_check_failed("ddos: attack-phase verdict mix is degenerate");

    tb.sort();
    ordered_json truth;
    truth["scenario"] = "ddos";
    truth["seed"] = seed;
    truth["program"] = "ddos";
    truth["hosts"] = {{"victim", dotted(victim)},
                      {"established_client", dotted(client_a)},
                      {"late_client", dotted(client_b)}};
    ordered_json ex;
    ex["final_census"] = ordered_json::object();
    ex["alerts"] = alerts;
    ex["trajectory"] = ordered_json::array(
        {{{"state", "monitored"}, {"clock", t_mon}, {"key", dotted(victim)}},
         {{"state", "attack"}, {"clock", t_att}, {"key", dotted(victim)}},
         {{"state", "default"}, {"clock", t_rel}, {"key", dotted(victim)}}});
    ex["attack_window"] = {{"from", t_att}, {"to", t_rel}};
    ex["allow_count"] = allow_count;
    ex["drop_count"] = drop_count;
    ex["late_client_drops"] = b_drops;
    ex["flood_drops"] = flood_drops;
    truth["expected"] = ex;

    add_background_tail(tb, derive_seed(seed, 99), span + 1.0, duration);
    if (duration > 0) tb.sort();
    truth["packets"] = tb.frames.size();
    return Scenario{"ddos", std::move(tb.frames), std::move(truth)};
}

// ---------------------------------------------------------------------------
// p2p: one host exchanges UDP and TCP with a rotating set of peers, one port
// per peer; a web-only host talks TCP to as many servers but over a single
// port and never over UDP. Only the first should end up flagged.
// ---------------------------------------------------------------------------

Scenario p2p_scenario(uint64_t seed, double duration) {
    const uint32_t p2p_host = ipv4(10, 0, 0, 50);
    const uint32_t web_host = ipv4(10, 0, 0, 60);
    const uint32_t dns = ipv4(10, 0, 3, 53);

    TraceBuilder tb;
    Rng rng(derive_seed(seed, 4));

    // peer exchange: one round per second, every third round adds TCP
    for (int r = 0; r < 285; ++r) {
        double t = 5.0 + r;
        int peer = r % 20;
        uint32_t peer_ip = ipv4(10, 0, 6, static_cast<uint8_t>(1 + peer));
        auto pport = static_cast<uint16_t>(6000 + peer);
        auto sport = static_cast<uint16_t>(52000 + peer);
        tb.add(t, make_udp_frame(p2p_host, peer_ip, sport, pport, random_payload(rng, 120 + rng.uniform(200))));
        tb.add(t + 0.005, make_udp_frame(peer_ip, p2p_host, pport, sport, random_payload(rng, 120 + rng.uniform(200))));
        if (r % 3 == 0) {
            tb.add(t + 0.010, make_tcp_frame(p2p_host, peer_ip, sport, pport, kTcpPsh | kTcpAck, 1,
                                             random_payload(rng, 180)));
            tb.add(t + 0.015, make_tcp_frame(peer_ip, p2p_host, pport, sport, kTcpPsh | kTcpAck, 1,
                                             random_payload(rng, 180)));
        }
    }

    // web browsing: twenty servers, one well-known port, TCP only
    for (int k = 0; k < 190; ++k) {
        double t = 5.25 + 1.5 * k;
        int srv = k % 20;
        uint32_t srv_ip = ipv4(10, 0, 7, static_cast<uint8_t>(1 + srv));
        auto sport = static_cast<uint16_t>(53000 + srv);
        uint8_t flags = k < 20 ? kTcpSyn : (kTcpPsh | kTcpAck);
        tb.add(t, make_tcp_frame(web_host, srv_ip, sport, 8080, flags, 1, random_payload(rng, 140)));
        uint8_t rflags = k < 20 ? (kTcpSyn | kTcpAck) : (kTcpPsh | kTcpAck);
        tb.add(t + 0.005, make_tcp_frame(srv_ip, web_host, 8080, sport, rflags, 1, random_payload(rng, 300)));
    }

    // background DNS lookups (UDP only)
    {
        Rng bg(derive_seed(seed, 5));
        uint16_t txid = 9000;
        for (int h = 0; h < 2; ++h) {
            uint32_t src = ipv4(10, 0, 1, static_cast<uint8_t>(20 + h));
            double t = 2.0 + 0.7 * h;
            while (true) {
                t += bg.exponential(4.0);
                if (t >= 290.0) break;
                std::string qname = random_label(bg, 9) + ".local";
                auto sport = static_cast<uint16_t>(54000 + h);
                tb.add(t, make_dns_query(src, dns, sport, txid, qname, 1));
                tb.add(t + 0.03, make_dns_response(dns, src, sport, txid, qname, 1, 0, 1));
                ++txid;
            }
        }
    }

    tb.sort();
    ordered_json truth;
    truth["scenario"] = "p2p";
    truth["seed"] = seed;
    truth["program"] = "p2p";
    truth["hosts"] = {{"p2p_host", dotted(p2p_host)}, {"web_host", dotted(web_host)}};
    ordered_json ex;
    ex["final_census"] = {{"p2p", 1}};
    ex["alerts"] = ordered_json::array(
        {{{"label", "p2p-host-detected"}, {"key", dotted(p2p_host)}}});
    ex["web_host_flagged"] = false;
    truth["expected"] = ex;

    add_background_tail(tb, derive_seed(seed, 99), 291.0, duration);
    if (duration > 0) tb.sort();
    truth["packets"] = tb.frames.size();
    return Scenario{"p2p", std::move(tb.frames), std::move(truth)};
}

// ---------------------------------------------------------------------------
// entropy: alternating uniformly random and plain-text payloads over UDP and
// TCP carriers. Truth records which payloads were random by construction.
// ---------------------------------------------------------------------------

Scenario entropy_scenario(uint64_t seed, double duration) {
    const uint32_t sink = ipv4(10, 0, 8, 8);

    TraceBuilder tb;
    Rng rng(derive_seed(seed, 6));
    ordered_json packets = ordered_json::array();

    for (int i = 0; i < 2000; ++i) {
        double t = 1.0 + 0.05 * i;
        bool random = (i % 2) == 0;
        bool tcp = (i % 4) >= 2;
        size_t len = random ? 800 + rng.uniform(401) : 150 + rng.uniform(1051);
        Bytes payload = random ? random_payload(rng, len) : ascii_payload(rng, len);
        uint32_t src = ipv4(10, 0, random ? 5 : 7, static_cast<uint8_t>(1 + rng.uniform(40)));
        auto sport = static_cast<uint16_t>(55000 + i % 100);
        double q;
        if (tcp)
            q = tb.add(t, make_tcp_frame(src, sink, sport, 8443, kTcpPsh | kTcpAck, 1, payload));
        else
            q = tb.add(t, make_udp_frame(src, sink, sport, 9999, payload));
        packets.push_back({{"clock", q}, {"random", random}});
    }

    tb.sort();
    ordered_json truth;
    truth["scenario"] = "entropy";
    truth["seed"] = seed;
    truth["program"] = "entropy";
    ordered_json ex;
    ex["final_census"] = ordered_json::object();
    ex["alert_label"] = "random-payload";
    ex["min_accuracy"] = 0.99;
    ex["packets"] = packets;
    truth["expected"] = ex;

    add_background_tail(tb, derive_seed(seed, 99), 102.0, duration);
    if (duration > 0) tb.sort();
    truth["packets"] = tb.frames.size();
    return Scenario{"entropy", std::move(tb.frames), std::move(truth)};
}

}  // namespace

const std::vector<std::string>& list_scenarios() {
    static const std::vector<std::string> names = {
        "conficker", "ddos", "entropy", "p2p", "portknock",
    };
    return names;
}

Scenario generate_scenario(const std::string& name, uint64_t seed, double duration) {
    if (name == "portknock") return portknock_scenario(seed, duration);
    if (name == "conficker") return conficker_scenario(seed, duration);
    if (name == "ddos") return ddos_scenario(seed, duration);
    if (name == "p2p") return p2p_scenario(seed, duration);
    if (name == "entropy") return entropy_scenario(seed, duration);
    throw std::out_of_range("unknown scenario '" + name + "'");
}

void write_scenario(const Scenario& sc, const std::string& pcap_path,
                    const std::string& truth_path) {
    PcapWriter w(pcap_path);
    for (const auto& [ts, frame] : sc.frames) w.write(ts, frame);
    w.close();
    if (truth_path.empty()) return;
    std::FILE* f = std::fopen(truth_path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + truth_path);
    std::string text = sc.truth.dump(2);
    text += '\n';
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

}  // namespace streamon
