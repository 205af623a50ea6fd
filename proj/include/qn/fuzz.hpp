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

#ifndef QN_FUZZ_HPP_
#define QN_FUZZ_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "qn/rsd.hpp"

namespace qn {

/// Engine decision for a whole request, taken from its first packet.
std::optional<QueueId> engine_decision(RsdEngine &engine, const Request &request, ReqId req_id = 1);

/// Two string dispatch fields and one int32 payload field, app 0 type 0.
std::shared_ptr<const RequestSchema> fuzz_schema();

struct FuzzCase {
    RuleSet rules;
    std::size_t cam_width = kDefaultCamWidth;
};

/// A random rule set with one uniform shape over alphabet ABCD.
FuzzCase random_rule_set(std::mt19937_64 &rng);
/// A random request, often built to hit (or nearly hit) one of the rules.
Request random_request(std::mt19937_64 &rng, const RuleSet &rules);

struct FuzzReport {
    std::uint64_t iterations = 0;
    std::uint64_t rule_sets = 0;
    std::uint64_t agreements = 0;
    std::uint64_t mismatches = 0;
    std::uint64_t matched = 0;  // agreements where some queue was chosen
    std::string first_mismatch;

    bool ok() const { return mismatches == 0; }
};

FuzzReport fuzz_match(std::uint64_t seed, std::uint64_t iterations);

}  // namespace qn

#endif  // QN_FUZZ_HPP_
