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

#include "qn/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>

namespace qn {

const char *app_kind_name(AppKind app) { return app == AppKind::PingPong ? "pingpong" : "kv"; }

const char *dispatch_mode_name(DispatchMode mode) { return mode == DispatchMode::Engine ? "engine" : "software"; }

void WorkloadSpec::validate() const {
    auto fail = [](const std::string &msg) { throw Error(Errc::InvalidConfig, msg); };
    if (n_app_threads == 0 || n_app_threads > 64) fail("n_app_threads must be in 1..64");
    if (n_generators == 0) fail("n_generators must be at least 1");
    if (window == 0) fail("window must be at least 1");
    if (n_generators * window > kUnackedCapacity) fail("n_generators * window exceeds the unacked table");
    if (n_requests > UINT32_MAX) fail("n_requests too large");
    if (app == AppKind::PingPong) {
        if (n_apps == 0 || n_apps > 255) fail("n_apps must be in 1..255");
        if (rule_steps == 0 || rule_steps > 255) fail("rule_steps must be in 1..255");
    } else {
        if (n_partitions == 0 || n_partitions > 100) fail("n_partitions must be in 1..100");
        if (n_partitions % n_app_threads != 0) fail("n_partitions must divide evenly over n_app_threads");
        if (n_keys < n_partitions) fail("n_keys must be at least n_partitions");
        if (!(zipf_s >= 0.0)) fail("zipf_s must be non-negative");
        if (value_size > kMaxFieldBytes) fail("value_size exceeds one TLV record");
    }
}

nlohmann::json WorkloadSpec::to_json() const {
    nlohmann::json j = {{"app", app_kind_name(app)},
                        {"dispatch", dispatch_mode_name(dispatch)},
                        {"request_size", request_size},
                        {"rule_steps", rule_steps},
                        {"n_apps", n_apps},
                        {"n_app_threads", n_app_threads},
                        {"n_partitions", n_partitions},
                        {"zipf_s", zipf_s},
                        {"n_keys", n_keys},
                        {"value_size", value_size},
                        {"n_requests", n_requests},
                        {"n_generators", n_generators},
                        {"window", window},
                        {"seed", seed}};
    if (rules) j["rules"] = ruleset_to_json(*rules);
    return j;
}

WorkloadSpec WorkloadSpec::from_json(const nlohmann::json &j) {
    WorkloadSpec s;
    const auto app = j.value("app", std::string("pingpong"));
    if (app == "pingpong") {
        s.app = AppKind::PingPong;
    } else if (app == "kv") {
        s.app = AppKind::KV;
    } else {
        throw Error(Errc::InvalidConfig, "unknown app '" + app + "'");
    }
    const auto mode = j.value("dispatch", std::string("engine"));
    if (mode == "engine") {
        s.dispatch = DispatchMode::Engine;
    } else if (mode == "software") {
        s.dispatch = DispatchMode::Software;
    } else {
        throw Error(Errc::InvalidConfig, "unknown dispatch mode '" + mode + "'");
    }
    s.request_size = j.value("request_size", s.request_size);
    s.rule_steps = j.value("rule_steps", s.rule_steps);
    s.n_apps = j.value("n_apps", s.n_apps);
    s.n_app_threads = j.value("n_app_threads", s.n_app_threads);
    s.n_partitions = j.value("n_partitions", s.n_partitions);
    s.zipf_s = j.value("zipf_s", s.zipf_s);
    s.n_keys = j.value("n_keys", s.n_keys);
    s.value_size = j.value("value_size", s.value_size);
    s.n_requests = j.value("n_requests", s.n_requests);
    s.n_generators = j.value("n_generators", s.n_generators);
    s.window = j.value("window", s.window);
    s.seed = j.value("seed", s.seed);
    if (j.contains("rules")) s.rules = ruleset_from_json(j.at("rules"));
    s.validate();
    return s;
}

nlohmann::json SimConfig::to_json() const {
    nlohmann::json gates_j = nlohmann::json::array();
    for (const auto &g : gates) gates_j.push_back(g.to_json());
    nlohmann::json j = {
        {"link", link.to_json()},
        {"gates", gates_j},
        {"swap_tables_in_gates", swap_tables_in_gates},
        {"rsd", {{"n_parallel", rsd.n_parallel}, {"cam_width", rsd.cam_width}, {"cycle_accounting", rsd.cycle_accounting}}},
        {"sender",
         {{"initial_rto_ms", std::chrono::duration<double, std::milli>(sender.initial_rto).count()},
          {"max_retries", sender.max_retries}}},
        {"tick_period_us", std::chrono::duration<double, std::micro>(tick_period).count()},
        {"time_limit_s", std::chrono::duration<double>(time_limit).count()}};
    if (reverse) j["reverse"] = reverse->to_json();
    return j;
}

SimConfig SimConfig::from_json(const nlohmann::json &j) {
    SimConfig c;
    if (j.contains("link")) c.link = LinkModel::from_json(j.at("link"));
    if (j.contains("reverse")) c.reverse = LinkModel::from_json(j.at("reverse"));
    for (const auto &g : j.value("gates", nlohmann::json::array())) c.gates.push_back(ReconfigGate::from_json(g));
    c.swap_tables_in_gates = j.value("swap_tables_in_gates", c.swap_tables_in_gates);
    if (j.contains("rsd")) {
        const auto &r = j.at("rsd");
        c.rsd.n_parallel = r.value("n_parallel", c.rsd.n_parallel);
        c.rsd.cam_width = r.value("cam_width", c.rsd.cam_width);
        c.rsd.cycle_accounting = r.value("cycle_accounting", c.rsd.cycle_accounting);
    }
    if (j.contains("sender")) {
        const auto &s = j.at("sender");
        if (s.contains("initial_rto_ms"))
            c.sender.initial_rto = std::chrono::duration_cast<SimTime>(
                std::chrono::duration<double, std::milli>(s.at("initial_rto_ms").get<double>()));
        c.sender.max_retries = s.value("max_retries", c.sender.max_retries);
    }
    if (j.contains("tick_period_us"))
        c.tick_period = std::chrono::duration_cast<SimTime>(
            std::chrono::duration<double, std::micro>(j.at("tick_period_us").get<double>()));
    if (j.contains("time_limit_s"))
        c.time_limit =
            std::chrono::duration_cast<SimTime>(std::chrono::duration<double>(j.at("time_limit_s").get<double>()));
    if (c.tick_period <= SimTime{0}) throw Error(Errc::InvalidConfig, "tick_period_us must be positive");
    return c;
}

void LatencyHistogram::record(SimTime latency) {
    if (!samples_.empty() && latency < samples_.back()) sorted_ = false;
    samples_.push_back(latency);
}

SimTime LatencyHistogram::percentile(double p) const {
    if (samples_.empty()) return SimTime{0};
    if (!sorted_) {
        std::sort(samples_.begin(), samples_.end());
        sorted_ = true;
    }
    const double clamped = std::clamp(p, 0.0, 100.0);
    auto rank = static_cast<std::size_t>(std::ceil(clamped / 100.0 * double(samples_.size())));
    rank = std::clamp<std::size_t>(rank, 1, samples_.size());
    return samples_[rank - 1];
}

SimTime LatencyHistogram::mean() const {
    if (samples_.empty()) return SimTime{0};
    SimTime total{0};
    for (auto s : samples_) total += s;
    return total / std::int64_t(samples_.size());
}

std::uint64_t Metrics::counter(const std::string &name) const {
    auto it = counters.find(name);
    return it == counters.end() ? 0 : it->second;
}

std::uint64_t Metrics::completions_in(std::uint8_t app_id, SimTime from, SimTime to) const {
    auto it = completions_by_app.find(app_id);
    if (it == completions_by_app.end()) return 0;
    return std::count_if(it->second.begin(), it->second.end(), [&](SimTime t) { return t >= from && t < to; });
}

ZipfSampler::ZipfSampler(std::size_t n, double s) {
    std::vector<double> w(n);
    for (std::size_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(double(r + 1), s);
    dist_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

double ZipfSampler::probability(std::size_t rank) const { return dist_.probabilities().at(rank); }

RequestSchema pingpong_schema(std::uint8_t app_id) {
    RequestSchema s;
    s.name = "PingPong";
    s.app_id = app_id;
    s.req_type = 0;
    s.fields = {{0, "key", FieldKind::String, true},
                {1, "gen", FieldKind::Int32, false},
                {2, "seq", FieldKind::Int32, false},
                {3, "body", FieldKind::String, false}};
    return canonicalize(s);
}

RequestSchema kv_get_schema() {
    RequestSchema s;
    s.name = "Get";
    s.fields = {{0, "key", FieldKind::String, true},
                {1, "gen", FieldKind::Int32, false},
                {2, "seq", FieldKind::Int32, false}};
    return canonicalize(s);
}

RequestSchema kv_response_schema() {
    RequestSchema s;
    s.name = "GetResponse";
    s.req_type = 1;
    s.fields = {{0, "key", FieldKind::String, true},
                {1, "gen", FieldKind::Int32, false},
                {2, "seq", FieldKind::Int32, false},
                {3, "value", FieldKind::String, false}};
    return canonicalize(s);
}

std::string pingpong_key(const WorkloadSpec &spec, std::size_t thread) {
    std::string key(std::max<std::size_t>(spec.rule_steps, 8), '.');
    for (std::size_t i = 0; i < spec.rule_steps; ++i)
        key[i] = i == 0 ? char('A' + thread) : char('a' + i % 26);
    return key;
}

std::size_t pingpong_body_size(const WorkloadSpec &spec) {
    const std::size_t key = pingpong_key(spec, 0).size();
    const std::size_t fixed = kHeaderModelBytes + (kTlvHeaderBytes + key) + 2 * (kTlvHeaderBytes + 4) + kTlvHeaderBytes;
    if (spec.request_size < fixed)
        throw Error(Errc::InvalidConfig,
                    "request_size " + std::to_string(spec.request_size) + " below minimum " + std::to_string(fixed));
    return spec.request_size - fixed;
}

RuleSet pingpong_rules(const WorkloadSpec &spec) {
    RuleSet rs;
    for (std::size_t app = 0; app < spec.n_apps; ++app) {
        for (std::size_t t = 0; t < spec.n_app_threads; ++t) {
            const auto key = pingpong_key(spec, t);
            SkipAndCheckRule r;
            r.app_id = std::uint8_t(app);
            r.queue = QueueId(t);
            for (std::size_t i = 0; i < spec.rule_steps; ++i) r.steps.push_back({0, std::string(1, key[i])});
            rs.rules.push_back(std::move(r));
        }
    }
    return rs;
}

std::string kv_key(std::size_t partition, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "P%02zu-%058zu", partition, index);
    return buf;
}

std::size_t kv_owner(std::size_t partition, std::size_t n_partitions, std::size_t n_threads) {
    return partition / (n_partitions / n_threads);
}

RuleSet kv_rules(const WorkloadSpec &spec) {
    RuleSet rs;
    for (std::size_t p = 0; p < spec.n_partitions; ++p) {
        SkipAndCheckRule r;
        r.steps = from_string_matcher(MatcherKind::Prefix, kv_key(p, 0).substr(0, 3)).steps;
        r.queue = QueueId(kv_owner(p, spec.n_partitions, spec.n_app_threads));
        rs.rules.push_back(std::move(r));
    }
    return rs;
}

namespace {

using RequestMaker = std::function<Request(std::size_t gen, std::uint32_t seq)>;
// Returns the response, if any; may bump sentinel counters in Metrics.
using Server = std::function<std::optional<Request>(QueueId queue, const Request &request, Metrics &m)>;

Metrics simulate(const WorkloadSpec &spec, const SimConfig &cfg, const SchemaRegistry &client_schemas,
                 const SchemaRegistry &server_schemas, const RuleSet &rules, const RequestMaker &make_request,
                 const Server &serve) {
    Metrics m;
    m.spec = spec;
    m.sim = cfg;

    Simulator sim;
    LinkModel back = cfg.reverse.value_or(cfg.link);
    if (!cfg.reverse) back.seed = cfg.link.seed + 1;
    Link c2s(sim, cfg.link);
    Link s2c(sim, back);

    const bool engine = spec.dispatch == DispatchMode::Engine;
    auto tables = std::make_shared<const RuleTables>(compile_rules(rules, cfg.rsd.cam_width));

    EndpointConfig client_cfg;
    client_cfg.hardware_dispatch = false;
    client_cfg.sender = cfg.sender;
    client_cfg.tick_period = cfg.tick_period;
    EndpointConfig server_cfg;
    server_cfg.rsd = cfg.rsd;
    server_cfg.hardware_dispatch = engine;
    server_cfg.software_queue = kDispatcherQueue;
    server_cfg.sender = cfg.sender;
    server_cfg.gates = cfg.gates;
    server_cfg.tick_period = cfg.tick_period;

    Endpoint client(sim, client_schemas, nullptr, client_cfg);
    Endpoint server(sim, server_schemas, tables, server_cfg);
    client.connect(&c2s);
    server.connect(&s2c);
    c2s.set_sink([&](const Bytes &f) { server.on_frame(f); });
    s2c.set_sink([&](const Bytes &f) { client.on_frame(f); });

    std::uint64_t non_first = 0;
    std::uint64_t stash_hits = 0;
    server.on_dispatch([&](const DataEvent &ev) {
        if (ev.packet.header.pkt_seq_num_in_req == 0) return;
        ++non_first;
        if (ev.dispatch.stash_hit) ++stash_hits;
    });

    std::vector<std::uint32_t> next_seq(spec.n_generators, 0);
    std::map<RequestKey, SimTime> send_time;
    std::map<ReqId, RequestKey> client_ids;

    std::function<void(std::size_t)> issue = [&](std::size_t g) {
        if (next_seq[g] >= spec.n_requests) return;
        const std::uint32_t seq = next_seq[g]++;
        const RequestKey key{std::uint32_t(g), seq};
        send_time[key] = sim.now();
        client_ids[client.send(make_request(g, seq))] = key;
        ++m.sent;
    };

    client.on_failure([&](ReqId id) {
        auto it = client_ids.find(id);
        if (it == client_ids.end()) return;
        ++m.failures;
        const auto g = it->second.first;
        send_time.erase(it->second);
        client_ids.erase(it);
        issue(g);
    });
    client.on_delivery([&](const Delivery &d) {
        const RequestKey key{std::uint32_t(d.request.int32(1)), std::uint32_t(d.request.int32(2))};
        auto it = send_time.find(key);
        if (it == send_time.end()) return;
        m.latency.record(sim.now() - it->second);
        send_time.erase(it);
        ++m.completed;
        m.elapsed = sim.now();
        issue(key.first);
    });
    server.on_delivery([&](const Delivery &d) {
        std::optional<QueueId> q = d.queue;
        if (!engine) q = oracle_dispatch(rules, d.request, &m.comparisons);
        if (!q) {
            ++m.no_match;
            return;
        }
        const RequestKey key{std::uint32_t(d.request.int32(1)), std::uint32_t(d.request.int32(2))};
        m.decisions[key] = *q;
        m.completions_by_app[d.request.schema->app_id].push_back(sim.now());
        if (auto resp = serve(*q, d.request, m)) server.send(*resp);
    });

    if (engine && cfg.swap_tables_in_gates) {
        for (const auto &g : cfg.gates) {
            sim.schedule_at(g.start + (g.end - g.start) / 2, [&server, &rules, &cfg] {
                server.engine()->swap_tables(std::make_shared<const RuleTables>(compile_rules(rules, cfg.rsd.cam_width)));
            });
        }
    }

    for (std::size_t w = 0; w < spec.window; ++w)
        for (std::size_t g = 0; g < spec.n_generators; ++g) issue(g);
    sim.run_until(cfg.time_limit);

    for (const auto &[k, v] : server.metrics()) m.counters["server." + k] = v;
    for (const auto &[k, v] : client.metrics()) m.counters["client." + k] = v;
    const auto &a = c2s.counters();
    const auto &b = s2c.counters();
    m.counters["link.lost"] = a.lost + b.lost;
    m.counters["link.duplicated"] = a.duplicated + b.duplicated;
    m.counters["link.reordered"] = a.reordered + b.reordered;
    m.counters["link.submitted"] = a.submitted + b.submitted;
    m.counters["link.delivered"] = a.delivered + b.delivered;
    m.counters["sentinel_hits"] = m.sentinel_hits;
    m.counters["no_match"] = m.no_match;

    m.total_cycles = m.counter("server.total_cycles");
    m.cycles_per_request = m.completed ? double(m.total_cycles) / double(m.completed) : 0.0;
    m.stash_hit_ratio = non_first ? double(stash_hits) / double(non_first) : 0.0;
    const double secs = std::chrono::duration<double>(m.elapsed).count();
    m.throughput_rps = secs > 0 ? double(m.completed) / secs : 0.0;
    return m;
}

}  // namespace

Metrics run_pingpong(const WorkloadSpec &spec, const SimConfig &sim) {
    spec.validate();
    if (spec.app != AppKind::PingPong) throw Error(Errc::InvalidConfig, "run_pingpong needs a PingPong workload");
    const RuleSet rules = spec.rules.value_or(pingpong_rules(spec));
    const std::string body(pingpong_body_size(spec), 'b');

    SchemaRegistry schemas;
    std::vector<std::shared_ptr<const RequestSchema>> by_app;
    for (std::size_t a = 0; a < spec.n_apps; ++a) {
        by_app.push_back(std::make_shared<const RequestSchema>(pingpong_schema(std::uint8_t(a))));
        schemas.add(by_app.back());
    }
    std::vector<std::string> keys;
    for (std::size_t t = 0; t < spec.n_app_threads; ++t) keys.push_back(pingpong_key(spec, t));

    auto make = [&](std::size_t g, std::uint32_t seq) {
        const auto app = g % spec.n_apps;
        const auto thread = (g / spec.n_apps) % spec.n_app_threads;
        return Request{by_app[app], {keys[thread], std::int32_t(g), std::int32_t(seq), body}};
    };
    auto echo = [](QueueId, const Request &req, Metrics &) -> std::optional<Request> { return req; };
    return simulate(spec, sim, schemas, schemas, rules, make, echo);
}

Metrics run_kv(const WorkloadSpec &spec, const SimConfig &sim) {
    spec.validate();
    if (spec.app != AppKind::KV) throw Error(Errc::InvalidConfig, "run_kv needs a KV workload");
    const RuleSet rules = spec.rules.value_or(kv_rules(spec));

    auto get = std::make_shared<const RequestSchema>(kv_get_schema());
    auto resp = std::make_shared<const RequestSchema>(kv_response_schema());
    SchemaRegistry server_schemas;
    server_schemas.add(get);
    SchemaRegistry client_schemas;
    client_schemas.add(resp);

    // Each app thread holds only the partitions it owns.
    const std::size_t per_partition = spec.n_keys / spec.n_partitions;
    std::vector<std::unordered_map<std::string, std::string>> shards(spec.n_app_threads);
    for (std::size_t p = 0; p < spec.n_partitions; ++p) {
        auto &shard = shards[kv_owner(p, spec.n_partitions, spec.n_app_threads)];
        for (std::size_t i = 0; i < per_partition; ++i)
            shard.emplace(kv_key(p, i), std::string(spec.value_size, char('a' + (p * 7 + i) % 26)));
    }

    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::size_t> pick_partition(0, spec.n_partitions - 1);
    ZipfSampler zipf(per_partition, spec.zipf_s);

    auto make = [&](std::size_t g, std::uint32_t seq) {
        const auto p = pick_partition(rng);
        return Request{get, {kv_key(p, zipf(rng)), std::int32_t(g), std::int32_t(seq)}};
    };
    auto serve = [&](QueueId q, const Request &req, Metrics &m) -> std::optional<Request> {
        const auto &key = req.str(0);
        const auto partition = std::size_t(std::stoul(key.substr(1, 2)));
        if (q >= shards.size() || kv_owner(partition, spec.n_partitions, spec.n_app_threads) != q) {
            ++m.sentinel_hits;
            return std::nullopt;
        }
        auto it = shards[q].find(key);
        if (it == shards[q].end()) {
            ++m.sentinel_hits;
            return std::nullopt;
        }
        return Request{resp, {key, req.int32(1), req.int32(2), it->second}};
    };
    return simulate(spec, sim, client_schemas, server_schemas, rules, make, serve);
}

Metrics run_software_baseline(WorkloadSpec spec, const SimConfig &sim) {
    spec.dispatch = DispatchMode::Software;
    return run_workload(spec, sim);
}

Metrics run_workload(const WorkloadSpec &spec, const SimConfig &sim) {
    return spec.app == AppKind::PingPong ? run_pingpong(spec, sim) : run_kv(spec, sim);
}

std::size_t count_decision_mismatches(const Metrics &a, const Metrics &b) {
    std::size_t mismatches = 0;
    for (const auto &[key, q] : a.decisions) {
        auto it = b.decisions.find(key);
        if (it == b.decisions.end() || it->second != q) ++mismatches;
    }
    for (const auto &[key, q] : b.decisions)
        if (!a.decisions.count(key)) ++mismatches;
    return mismatches;
}

RunConfig RunConfig::from_json(const nlohmann::json &j) {
    RunConfig c;
    if (j.contains("workload")) c.workload = WorkloadSpec::from_json(j.at("workload"));
    if (j.contains("sim")) c.sim = SimConfig::from_json(j.at("sim"));
    c.compare_baseline = j.value("compare_baseline", c.compare_baseline);
    return c;
}

nlohmann::json RunConfig::to_json() const {
    return {{"workload", workload.to_json()}, {"sim", sim.to_json()}, {"compare_baseline", compare_baseline}};
}

RunConfig load_run_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, "cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::exception &e) {
        throw Error(Errc::InvalidConfig, path + ": " + e.what());
    }
    return RunConfig::from_json(j);
}

}  // namespace qn
