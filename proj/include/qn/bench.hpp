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

#ifndef QN_BENCH_HPP_
#define QN_BENCH_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qn/netsim.hpp"

namespace qn {

enum class AppKind { PingPong, KV };
enum class DispatchMode { Engine, Software };

const char *app_kind_name(AppKind app);
const char *dispatch_mode_name(DispatchMode mode);

/// Queue the software dispatcher reads from; app threads use 0..n-1.
inline constexpr QueueId kDispatcherQueue = 255;

struct WorkloadSpec {
    AppKind app = AppKind::PingPong;
    DispatchMode dispatch = DispatchMode::Engine;
    std::size_t request_size = 128;  // PingPong: whole frame, headers included
    std::size_t rule_steps = 1;      // PingPong: one-byte skip-and-checks per rule
    std::size_t n_apps = 1;          // PingPong: generators round-robin over app_id 0..n-1
    std::size_t n_app_threads = 1;
    std::size_t n_partitions = 24;
    double zipf_s = 0.9;
    std::size_t n_keys = 10000;
    std::size_t value_size = 64;
    std::uint64_t n_requests = 1000;  // per generator
    std::size_t n_generators = 1;
    std::size_t window = 1;  // outstanding requests per generator
    std::uint64_t seed = 1;
    std::optional<RuleSet> rules;  // replaces the generated rules

    void validate() const;
    nlohmann::json to_json() const;
    static WorkloadSpec from_json(const nlohmann::json &j);
};

struct SimConfig {
    LinkModel link;                   // client to server
    std::optional<LinkModel> reverse;  // default: `link` with seed + 1
    std::vector<ReconfigGate> gates;   // at the server NIC
    bool swap_tables_in_gates = true;  // recompile and swap at each window midpoint
    RsdConfig rsd;
    SenderConfig sender;
    SimTime tick_period = std::chrono::milliseconds(1);
    SimTime time_limit = std::chrono::seconds(3600);

    nlohmann::json to_json() const;
    static SimConfig from_json(const nlohmann::json &j);
};

/// Exact latency distribution; percentiles use the nearest-rank method.
class LatencyHistogram {
 public:
    void record(SimTime latency);
    std::size_t count() const { return samples_.size(); }
    SimTime percentile(double p) const;
    SimTime mean() const;

 private:
    mutable std::vector<SimTime> samples_;
    mutable bool sorted_ = true;
};

/// (generator, sequence number) of one request.
using RequestKey = std::pair<std::uint32_t, std::uint32_t>;

struct Metrics {
    WorkloadSpec spec;
    SimConfig sim;
    std::uint64_t sent = 0;
    std::uint64_t completed = 0;
    std::uint64_t failures = 0;
    SimTime elapsed{0};  // last completion
    double throughput_rps = 0.0;
    LatencyHistogram latency;
    std::map<std::string, std::uint64_t> counters;
    std::uint64_t total_cycles = 0;
    double cycles_per_request = 0.0;
    double stash_hit_ratio = 0.0;
    std::uint64_t sentinel_hits = 0;
    std::uint64_t comparisons = 0;
    std::uint64_t no_match = 0;  // requests no rule or default accepted
    std::map<RequestKey, QueueId> decisions;
    /// Server-side delivery times per app_id.
    std::map<std::uint8_t, std::vector<SimTime>> completions_by_app;

    std::uint64_t counter(const std::string &name) const;
    std::uint64_t completions_in(std::uint8_t app_id, SimTime from, SimTime to) const;
};

class ZipfSampler {
 public:
    ZipfSampler(std::size_t n, double s);
    std::size_t operator()(std::mt19937_64 &rng) { return dist_(rng); }
    double probability(std::size_t rank) const;

 private:
    std::discrete_distribution<std::size_t> dist_;
};

RequestSchema pingpong_schema(std::uint8_t app_id = 0);
RequestSchema kv_get_schema();
RequestSchema kv_response_schema();

std::string pingpong_key(const WorkloadSpec &spec, std::size_t thread);
RuleSet pingpong_rules(const WorkloadSpec &spec);
/// Body length that makes one PingPong frame exactly `request_size` bytes.
std::size_t pingpong_body_size(const WorkloadSpec &spec);

std::string kv_key(std::size_t partition, std::size_t index);
std::size_t kv_owner(std::size_t partition, std::size_t n_partitions, std::size_t n_threads);
RuleSet kv_rules(const WorkloadSpec &spec);

Metrics run_pingpong(const WorkloadSpec &spec, const SimConfig &sim);
Metrics run_kv(const WorkloadSpec &spec, const SimConfig &sim);
/// Same workload with the NIC sending everything to a software dispatcher.
Metrics run_software_baseline(WorkloadSpec spec, const SimConfig &sim);
Metrics run_workload(const WorkloadSpec &spec, const SimConfig &sim);

/// Requests whose queue differs (or is missing) between two runs.
std::size_t count_decision_mismatches(const Metrics &a, const Metrics &b);

std::string report_header();
std::string report_row(const Metrics &m);
/// Appends one row, writing the header first when the file is new or empty.
void emit_report(const Metrics &m, const std::string &path);

struct RunConfig {
    WorkloadSpec workload;
    SimConfig sim;
    bool compare_baseline = false;

    static RunConfig from_json(const nlohmann::json &j);
    nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::string &path);

}  // namespace qn

#endif  // QN_BENCH_HPP_
