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

#include "qn/fuzz.hpp"

#include <sstream>

namespace qn {

namespace {

constexpr std::string_view kAlphabet = "ABCD";
constexpr std::size_t kInputsPerRuleSet = 8;

std::size_t uniform(std::mt19937_64 &rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool chance(std::mt19937_64 &rng, double p) { return std::bernoulli_distribution(p)(rng); }

std::string random_text(std::mt19937_64 &rng, std::size_t n) {
    std::string s(n, 'A');
    for (auto &c : s) c = kAlphabet[uniform(rng, 0, kAlphabet.size() - 1)];
    return s;
}

std::string describe(const RuleSet &rules, const Request &req, std::optional<QueueId> oracle,
                     std::optional<QueueId> engine) {
    std::ostringstream os;
    os << "rules=" << ruleset_to_json(rules).dump() << " a=\"" << req.str(0) << "\" b=\"" << req.str(1)
       << "\" oracle=" << (oracle ? std::to_string(*oracle) : "none")
       << " engine=" << (engine ? std::to_string(*engine) : "none");
    return os.str();
}

}  // namespace

std::optional<QueueId> engine_decision(RsdEngine &engine, const Request &request, ReqId req_id) {
    const auto packets = segment_request(request, req_id, 0);
    return engine.dispatch_packet(packets.front()).queue;
}

std::shared_ptr<const RequestSchema> fuzz_schema() {
    static const auto schema = [] {
        RequestSchema s;
        s.name = "Fuzz";
        s.fields = {{0, "a", FieldKind::String, true},
                    {1, "b", FieldKind::String, true},
                    {2, "c", FieldKind::Int32, false}};
        return std::make_shared<const RequestSchema>(canonicalize(s));
    }();
    return schema;
}

FuzzCase random_rule_set(std::mt19937_64 &rng) {
    static constexpr std::size_t kWidths[] = {1, 2, 3, 8};
    FuzzCase fc;
    fc.cam_width = kWidths[uniform(rng, 0, 3)];
    const auto field = std::uint8_t(uniform(rng, 0, 1));

    std::vector<std::pair<std::size_t, std::size_t>> shape(uniform(rng, 1, 4));
    for (auto &[skip, len] : shape) {
        skip = uniform(rng, 0, 3);
        len = uniform(rng, 1, 4);
    }
    const std::size_t n_rules = uniform(rng, 1, 6);
    for (std::size_t i = 0; i < n_rules; ++i) {
        SkipAndCheckRule r;
        r.field_index = field;
        r.queue = QueueId(uniform(rng, 0, 7));
        for (const auto &[skip, len] : shape) r.steps.push_back({skip, random_text(rng, len)});
        if (chance(rng, 0.3)) r.length_guard = std::uint16_t(r.scanned_bytes() + uniform(rng, 0, 2));
        // Identical patterns must agree on their length guard.
        for (const auto &prev : fc.rules.rules)
            if (prev.steps == r.steps) r.length_guard = prev.length_guard;
        fc.rules.rules.push_back(std::move(r));
    }
    if (chance(rng, 0.3)) fc.rules.default_queues[{0, 0}] = QueueId(uniform(rng, 0, 7));
    return fc;
}

Request random_request(std::mt19937_64 &rng, const RuleSet &rules) {
    const std::uint8_t field = rules.rules.empty() ? 0 : rules.rules.front().field_index;
    std::string target;
    if (!rules.rules.empty() && chance(rng, 0.6)) {
        const auto &r = rules.rules[uniform(rng, 0, rules.rules.size() - 1)];
        for (const auto &st : r.steps) target += random_text(rng, st.skip) + st.check;
        if (r.length_guard && chance(rng, 0.7)) {
            if (*r.length_guard > target.size()) target += random_text(rng, *r.length_guard - target.size());
        } else {
            target += random_text(rng, uniform(rng, 0, 3));
        }
        if (!target.empty() && chance(rng, 0.3)) target[uniform(rng, 0, target.size() - 1)] = kAlphabet[uniform(rng, 0, 3)];
        if (!target.empty() && chance(rng, 0.1)) target.pop_back();
    } else {
        target = random_text(rng, uniform(rng, 0, 20));
    }
    std::string other = random_text(rng, uniform(rng, 0, 10));
    Request req{fuzz_schema(), {std::string(), std::string(), std::int32_t(uniform(rng, 0, 1u << 30))}};
    req.values[field] = std::move(target);
    req.values[1 - field] = std::move(other);
    return req;
}

FuzzReport fuzz_match(std::uint64_t seed, std::uint64_t iterations) {
    std::mt19937_64 rng(seed);
    FuzzReport report;
    FuzzCase fc;
    std::unique_ptr<RsdEngine> engine;
    for (std::uint64_t i = 0; i < iterations; ++i) {
        if (i % kInputsPerRuleSet == 0) {
            fc = random_rule_set(rng);
            RsdConfig cfg;
            cfg.n_parallel = 1;
            cfg.cam_width = fc.cam_width;
            engine = std::make_unique<RsdEngine>(
                cfg, std::make_shared<const RuleTables>(compile_rules(fc.rules, fc.cam_width)));
            ++report.rule_sets;
        }
        const Request req = random_request(rng, fc.rules);
        const auto oracle = oracle_dispatch(fc.rules, req);
        const auto got = engine_decision(*engine, req, ReqId(i + 1));
        ++report.iterations;
        if (oracle == got) {
            ++report.agreements;
            if (got) ++report.matched;
        } else {
            if (report.mismatches == 0) report.first_mismatch = describe(fc.rules, req, oracle, got);
            ++report.mismatches;
        }
    }
    return report;
}

}  // namespace qn
