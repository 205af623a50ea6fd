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

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qn/bench.hpp"
#include "qn/fuzz.hpp"
#include "qn/idl.hpp"
#include "qn/rules.hpp"
#include "qn/udp.hpp"

namespace {

std::string read_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw qn::Error(qn::Errc::Io, "cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_output(const std::string &path, const std::string &text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw qn::Error(qn::Errc::Io, "cannot write " + path);
    out << text << '\n';
}

nlohmann::json parse_json(const std::string &path) {
    try {
        return nlohmann::json::parse(read_file(path), nullptr, true, true);
    } catch (const nlohmann::json::exception &e) {
        throw qn::Error(qn::Errc::InvalidConfig, path + ": " + e.what());
    }
}

void print_metrics(const qn::Metrics &m) {
    using us = std::chrono::duration<double, std::micro>;
    std::cout << qn::app_kind_name(m.spec.app) << '/' << qn::dispatch_mode_name(m.spec.dispatch) << ": sent "
              << m.sent << ", completed " << m.completed << ", failures " << m.failures << "\n  elapsed "
              << us(m.elapsed).count() << " us, throughput " << m.throughput_rps << " req/s, p50 "
              << us(m.latency.percentile(50)).count() << " us, p99 " << us(m.latency.percentile(99)).count()
              << " us\n  cycles/request " << m.cycles_per_request << ", stash hit ratio " << m.stash_hit_ratio
              << ", sentinel hits " << m.sentinel_hits << ", comparisons " << m.comparisons << '\n';
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"qn: request dispatch toolkit"};
    app.require_subcommand(1);

    auto *idl = app.add_subcommand("compile-idl", "Parse an IDL file and emit schema JSON");
    std::string idl_file, idl_out;
    int app_id = 0, req_type = 0;
    bool emit_text = false;
    idl->add_option("file", idl_file, "IDL source")->required();
    idl->add_option("--app-id", app_id, "app_id stamped on every request")->check(CLI::Range(0, 255));
    idl->add_option("--req-type", req_type, "req_type of the first request; later ones count up")
        ->check(CLI::Range(0, 255));
    idl->add_option("-o,--output", idl_out, "Output path (default stdout)");
    idl->add_flag("--emit-idl", emit_text, "Emit canonical IDL text instead of JSON");

    auto *rules = app.add_subcommand("compile-rules", "Compile a JSON rule set to RAM/CAM tables");
    std::string rules_file, rules_out;
    std::size_t cam_width = qn::kDefaultCamWidth;
    rules->add_option("file", rules_file, "Rule set JSON")->required();
    rules->add_option("--cam-width", cam_width, "CAM pattern width in bytes")->check(CLI::Range(1, 64));
    rules->add_option("-o,--output", rules_out, "Output path (default stdout)");

    auto *sim = app.add_subcommand("sim", "Run a simulated workload");
    std::string sim_config, sim_csv;
    bool baseline = false;
    sim->add_option("--config", sim_config, "Run configuration JSON")->required();
    sim->add_option("--csv", sim_csv, "Append a report row to this CSV file");
    sim->add_flag("--baseline", baseline, "Also run the software dispatcher and compare decisions");

    auto *cfg = app.add_subcommand("print-config", "Print the default run configuration");

    auto *fuzz = app.add_subcommand("fuzz-match", "Compare compiled tables against the rule oracle");
    std::uint64_t seed = 1, iters = 100000;
    fuzz->add_option("--seed", seed, "RNG seed");
    fuzz->add_option("--iters", iters, "Number of (rule set, input) pairs");

    auto *serve = app.add_subcommand("udp-serve", "Echo PingPong requests over UDP");
    std::uint16_t serve_port = 9000;
    std::uint64_t serve_count = 1000;
    int idle_ms = 5000;
    serve->add_option("--port", serve_port, "Local UDP port");
    serve->add_option("--count", serve_count, "Stop after this many requests");
    serve->add_option("--idle-ms", idle_ms, "Stop after this long without traffic");

    auto *ping = app.add_subcommand("udp-ping", "Closed-loop PingPong client over UDP");
    std::string ping_host = "127.0.0.1";
    std::uint16_t ping_port = 9000;
    std::uint64_t ping_count = 1000;
    std::size_t ping_size = 128;
    int timeout_ms = 30000;
    ping->add_option("--host", ping_host, "Server IPv4 address");
    ping->add_option("--port", ping_port, "Server UDP port");
    ping->add_option("--count", ping_count, "Requests to send");
    ping->add_option("--size", ping_size, "Request frame size in bytes");
    ping->add_option("--timeout-ms", timeout_ms, "Give up after this long");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*idl) {
            auto schemas = qn::parse_idl(read_file(idl_file));
            for (std::size_t i = 0; i < schemas.size(); ++i) {
                schemas[i].app_id = std::uint8_t(app_id);
                if (req_type + i > 255) throw qn::Error(qn::Errc::InvalidConfig, "req_type overflows 255");
                schemas[i].req_type = std::uint8_t(req_type + i);
            }
            if (emit_text) {
                write_output(idl_out, qn::emit_idl_text(schemas));
            } else {
                nlohmann::json j = nlohmann::json::array();
                for (const auto &s : schemas) j.push_back(qn::schema_to_json(s));
                write_output(idl_out, (j.size() == 1 ? j[0] : j).dump(2));
            }
        } else if (*rules) {
            const auto rs = qn::ruleset_from_json(parse_json(rules_file));
            write_output(rules_out, qn::compile_rules(rs, cam_width).to_json().dump(2));
        } else if (*sim) {
            const auto rc = qn::load_run_config(sim_config);
            const auto m = qn::run_workload(rc.workload, rc.sim);
            print_metrics(m);
            if (!sim_csv.empty()) qn::emit_report(m, sim_csv);
            int status = m.sentinel_hits ? 1 : 0;
            if (baseline || rc.compare_baseline) {
                const auto b = qn::run_software_baseline(rc.workload, rc.sim);
                print_metrics(b);
                if (!sim_csv.empty()) qn::emit_report(b, sim_csv);
                const auto mismatches = qn::count_decision_mismatches(m, b);
                std::cout << "decision mismatches: " << mismatches << '\n';
                if (mismatches || b.sentinel_hits) status = 1;
            }
            return status;
        } else if (*cfg) {
            std::cout << qn::RunConfig{}.to_json().dump(2) << '\n';
        } else if (*fuzz) {
            const auto r = qn::fuzz_match(seed, iters);
            std::cout << "iterations " << r.iterations << ", rule sets " << r.rule_sets << ", agreements "
                      << r.agreements << " (" << r.matched << " matched), mismatches " << r.mismatches << '\n';
            if (!r.ok()) {
                std::cout << "first mismatch: " << r.first_mismatch << '\n';
                return 1;
            }
        } else if (*serve) {
            qn::SchemaRegistry schemas;
            schemas.add(std::make_shared<const qn::RequestSchema>(qn::pingpong_schema()));
            auto tables = std::make_shared<const qn::RuleTables>(qn::compile_rules(qn::pingpong_rules({})));
            qn::UdpEndpoint ep(serve_port, schemas, tables);
            std::cout << "serving on 127.0.0.1:" << ep.port() << std::endl;
            const auto n = qn::udp_serve(ep, serve_count, std::chrono::milliseconds(idle_ms));
            std::cout << "served " << n << " requests\n";
        } else if (*ping) {
            qn::SchemaRegistry schemas;
            schemas.add(std::make_shared<const qn::RequestSchema>(qn::pingpong_schema()));
            qn::UdpEndpoint ep(0, schemas);
            ep.set_peer({ping_host, ping_port});
            const auto r = qn::udp_ping(ep, ping_count, ping_size, std::chrono::milliseconds(timeout_ms));
            qn::LatencyHistogram h;
            for (auto l : r.latencies) h.record(l);
            using us = std::chrono::duration<double, std::micro>;
            std::cout << "sent " << r.sent << ", completed " << r.completed << ", failures " << r.failures
                      << ", p50 " << us(h.percentile(50)).count() << " us, p99 " << us(h.percentile(99)).count()
                      << " us\n";
            return r.completed == ping_count ? 0 : 1;
        }
    } catch (const qn::Error &e) {
        std::cerr << "error [" << qn::errc_name(e.code()) << "]: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
