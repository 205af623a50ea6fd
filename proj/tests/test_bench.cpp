/* Copyright 2026 The qn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "qn/bench.hpp"
#include "qn/udp.hpp"
#include "support.hpp"

using namespace qn;
using namespace std::chrono_literals;

namespace {

WorkloadSpec pingpong(std::uint64_t n = 200) {
    WorkloadSpec w;
    w.n_requests = n;
    return w;
}

std::vector<std::string> lines_of(const std::string &path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string temp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("qn_" + std::to_string(::getpid()) + "_" + name)).string();
}

}  // namespace

TEST_CASE("pingpong frames have the configured size") {
    for (std::size_t size : {128, 256, 512, 1024, 1500}) {
        WorkloadSpec w;
        w.request_size = size;
        const auto schema = std::make_shared<const RequestSchema>(pingpong_schema());
        const Request req{schema, {pingpong_key(w, 0), std::int32_t(0), std::int32_t(0),
                                   std::string(pingpong_body_size(w), 'b')}};
        const auto pkts = segment_request(req, 1, 0);
        REQUIRE(pkts.size() == 1);
        CHECK(encode_frame(pkts[0]).size() == size);
    }
    WorkloadSpec tiny;
    tiny.request_size = 64;
    CHECK_THROWS_AS(pingpong_body_size(tiny), Error);
}

TEST_CASE("pingpong keys and rules") {
    WorkloadSpec w;
    w.n_app_threads = 3;
    w.rule_steps = 10;
    CHECK(pingpong_key(w, 0) == "Abcdefghij");
    CHECK(pingpong_key(w, 2).front() == 'C');
    const auto rs = pingpong_rules(w);
    CHECK(rs.rules.size() == 3);
    for (const auto &r : rs.rules) CHECK(r.steps.size() == 10);
    CHECK(oracle_match(rs.rules, pingpong_key(w, 1), {0, 0, 0}) == rs.rules[1].queue);
}

TEST_CASE("pingpong over a lossless link") {
    const auto m = run_pingpong(pingpong(), SimConfig{});
    CHECK(m.sent == 200);
    CHECK(m.completed == 200);
    CHECK(m.failures == 0);
    CHECK(m.latency.count() == 200);
    CHECK(m.cycles_per_request == doctest::Approx(double(dispatch_cycles(1))));
    CHECK(m.counter("server.dispatched") == 200);
    CHECK(m.throughput_rps > 0);
    // Two link hops of 10 us per round trip, nothing else on the path.
    CHECK(m.latency.percentile(50) == 20us);
}

TEST_CASE("pingpong cycles follow the per-check cost") {
    for (std::size_t steps : {1, 2, 4, 8, 16}) {
        auto w = pingpong(20);
        w.rule_steps = steps;
        const auto m = run_pingpong(w, SimConfig{});
        CHECK(m.completed == 20);
        CHECK(m.cycles_per_request == doctest::Approx(double(9 + 6 * steps)));
    }
}

TEST_CASE("pingpong survives 5% loss with retransmission") {
    SimConfig sim;
    sim.link.loss_p = 0.05;
    sim.link.seed = 3;
    auto w = pingpong(400);
    w.n_generators = 4;
    w.window = 4;
    const auto m = run_pingpong(w, sim);
    CHECK(m.completed == 1600);
    CHECK(m.failures == 0);
    CHECK(m.counter("client.retransmissions") > 0);
    CHECK(m.counter("link.lost") > 0);
}

TEST_CASE("engine and software baseline make the same decisions") {
    auto w = pingpong(100);
    w.n_app_threads = 4;
    w.n_generators = 8;
    w.rule_steps = 3;
    const auto hw = run_pingpong(w, SimConfig{});
    const auto sw = run_software_baseline(w, SimConfig{});
    CHECK(hw.completed == 800);
    CHECK(sw.completed == 800);
    CHECK(sw.spec.dispatch == DispatchMode::Software);
    CHECK(count_decision_mismatches(hw, sw) == 0);
    CHECK(sw.comparisons > 0);
    CHECK(hw.comparisons == 0);
    std::set<QueueId> used;
    for (const auto &[k, q] : hw.decisions) used.insert(q);
    CHECK(used.size() == 4);
}

TEST_CASE("software comparisons grow with the rule count") {
    std::vector<std::uint64_t> per;
    for (std::size_t threads : {1, 2, 4, 8}) {
        auto w = pingpong(50);
        w.n_app_threads = threads;
        w.n_generators = threads;
        const auto sw = run_software_baseline(w, SimConfig{});
        per.push_back(sw.comparisons / sw.completed);
    }
    CHECK(std::is_sorted(per.begin(), per.end()));
    CHECK(per.back() > per.front());
}

TEST_CASE("an empty rule set with a default queue still serves every request") {
    auto w = pingpong(50);
    w.rules = RuleSet{{}, {{{0, 0}, 0}}};
    const auto m = run_pingpong(w, SimConfig{});
    CHECK(m.completed == 50);
    auto none = pingpong(5);
    none.rules = RuleSet{};
    SimConfig short_run;
    short_run.time_limit = 1s;
    const auto dropped = run_pingpong(none, short_run);
    CHECK(dropped.completed == 0);
    CHECK(dropped.counter("server.dropped_no_match") > 0);
}

TEST_CASE("KV partitions and ownership") {
    std::map<std::size_t, std::size_t> owned;
    for (std::size_t p = 0; p < 24; ++p) ++owned[kv_owner(p, 24, 8)];
    REQUIRE(owned.size() == 8);
    for (const auto &[t, n] : owned) CHECK(n == 3);
    CHECK(kv_owner(0, 24, 8) == 0);
    CHECK(kv_owner(23, 24, 8) == 7);
    CHECK(kv_key(7, 42).substr(0, 3) == "P07");

    WorkloadSpec w;
    w.app = AppKind::KV;
    w.n_app_threads = 8;
    const auto rules = kv_rules(w);
    CHECK(rules.rules.size() == 24);
    for (std::size_t p = 0; p < 24; ++p)
        CHECK(oracle_match(rules.rules, kv_key(p, 5), {0, 0, 0}) == QueueId(kv_owner(p, 24, 8)));
}

TEST_CASE("KV GETs land on the owning thread") {
    WorkloadSpec w;
    w.app = AppKind::KV;
    w.n_app_threads = 8;
    w.n_generators = 4;
    w.window = 2;
    w.n_requests = 500;
    w.n_keys = 2000;
    const auto m = run_kv(w, SimConfig{});
    CHECK(m.completed == 2000);
    CHECK(m.sentinel_hits == 0);
    const auto sw = run_software_baseline(w, SimConfig{});
    CHECK(count_decision_mismatches(m, sw) == 0);
    CHECK(sw.sentinel_hits == 0);
}

TEST_CASE("zipf sampler") {
    ZipfSampler uniform(10, 0.0);
    for (std::size_t k = 0; k < 10; ++k) CHECK(uniform.probability(k) == doctest::Approx(0.1));
    ZipfSampler z(100, 1.0);
    CHECK(z.probability(0) / z.probability(1) == doctest::Approx(2.0));
    CHECK(z.probability(0) / z.probability(9) == doctest::Approx(10.0));
    std::mt19937_64 rng(1);
    std::vector<std::size_t> hist(100);
    for (int i = 0; i < 200000; ++i) ++hist.at(z(rng));
    CHECK(double(hist[0]) / 200000 == doctest::Approx(z.probability(0)).epsilon(0.03));
}

TEST_CASE("latency histogram uses nearest rank") {
    LatencyHistogram h;
    CHECK(h.percentile(99) == 0ns);
    for (int i = 100; i >= 1; --i) h.record(std::chrono::microseconds(i));
    CHECK(h.percentile(50) == 50us);
    CHECK(h.percentile(99) == 99us);
    CHECK(h.percentile(100) == 100us);
    CHECK(h.percentile(0.5) == 1us);
    CHECK(h.mean() == 50500ns);
    h.record(1000us);
    CHECK(h.percentile(100) == 1000us);
}

TEST_CASE("CSV report appends under one header") {
    const auto path = temp_path("report.csv");
    std::filesystem::remove(path);
    const auto m = run_pingpong(pingpong(10), SimConfig{});
    emit_report(m, path);
    emit_report(m, path);
    const auto lines = lines_of(path);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == report_header());
    CHECK(lines[1] == lines[2]);
    const auto columns = [](const std::string &s) { return std::count(s.begin(), s.end(), ',') + 1; };
    CHECK(columns(lines[1]) == columns(lines[0]));
    CHECK(lines[1].rfind("pingpong,engine,", 0) == 0);

    std::ofstream(path) << "other,header\n";
    CHECK_THROWS_AS(emit_report(m, path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("run configuration round trip") {
    RunConfig rc;
    rc.workload.app = AppKind::KV;
    rc.workload.n_app_threads = 8;
    rc.workload.zipf_s = 1.1;
    rc.sim.link.loss_p = 0.02;
    rc.sim.gates.push_back({{1}, 1ms, 2ms});
    rc.sim.sender.initial_rto = 50ms;
    rc.compare_baseline = true;
    const auto back = RunConfig::from_json(rc.to_json());
    CHECK(back.to_json() == rc.to_json());
    CHECK(back.workload.app == AppKind::KV);
    CHECK(back.sim.sender.initial_rto == 50ms);
    CHECK(back.sim.gates.at(0).end == 2ms);

    const auto path = temp_path("run.json");
    std::ofstream(path) << "// comment\n{\"workload\": {\"app\": \"kv\", \"n_requests\": 7}}\n";
    const auto loaded = load_run_config(path);
    CHECK(loaded.workload.app == AppKind::KV);
    CHECK(loaded.workload.n_requests == 7);
    std::filesystem::remove(path);

    auto bad = rc.to_json();
    bad["workload"]["window"] = 0;
    CHECK_THROWS_AS(RunConfig::from_json(bad), Error);
}

TEST_CASE("gated app stops completing during its window") {
    auto w = pingpong(2000);
    w.n_apps = 2;
    w.n_generators = 2;
    SimConfig sim;
    sim.gates.push_back({{1}, 5ms, 15ms});
    const auto m = run_pingpong(w, sim);
    CHECK(m.completed == 4000);
    CHECK(m.completions_in(1, 5ms, 15ms) == 0);
    CHECK(m.completions_in(0, 5ms, 15ms) > 0);
    CHECK(m.completions_in(1, 15ms, 1h) > 0);
    CHECK(m.counter("server.gate_drops") > 0);
}

TEST_CASE("UDP loopback ping-pong") {
    SchemaRegistry reg;
    reg.add(std::make_shared<const RequestSchema>(pingpong_schema()));
    UdpEndpoint server(0, reg, std::make_shared<const RuleTables>(compile_rules(pingpong_rules(WorkloadSpec{}))));
    UdpEndpoint client(0, reg);
    client.set_peer({"127.0.0.1", server.port()});
    std::uint64_t served = 0;
    std::thread t([&] { served = udp_serve(server, 20, 2000ms); });
    const auto r = udp_ping(client, 20, 128, 5000ms);
    t.join();
    CHECK(r.completed == 20);
    CHECK(r.failures == 0);
    CHECK(served == 20);
    CHECK(r.latencies.size() == 20);
}
