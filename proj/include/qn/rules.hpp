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

#ifndef QN_RULES_HPP_
#define QN_RULES_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "qn/error.hpp"
#include "qn/wire.hpp"

namespace qn {

using QueueId = std::uint8_t;

inline constexpr std::size_t kRamCapacity = 512;
inline constexpr std::size_t kCamCapacity = 512;
inline constexpr std::size_t kDefaultCamWidth = 8;
inline constexpr std::size_t kMaxStatesPerScope = 256;
inline constexpr std::size_t kByteStreamCapacity = 64 * 128;
inline constexpr std::size_t kMaxSkip = 255;

/// One skip-and-check: advance `skip` bytes, then compare `check`.
struct Step {
    std::size_t skip = 0;
    std::string check;

    bool operator==(const Step &) const = default;
};

struct SkipAndCheckRule {
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    std::uint8_t field_index = 0;
    std::vector<Step> steps;
    QueueId queue = 0;
    // Exact matchers: TLV value length must equal this.
    std::optional<std::uint16_t> length_guard;

    std::size_t scanned_bytes() const;
    bool operator==(const SkipAndCheckRule &) const = default;
};

/// (app_id, req_type); every rule in one scope targets the same field.
struct ScopeId {
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;

    auto operator<=>(const ScopeId &) const = default;
};

struct RuleSet {
    std::vector<SkipAndCheckRule> rules;
    std::map<ScopeId, QueueId> default_queues;
};

/*
 * Dispatch-rule text: literal bytes, with '.' skipping one byte.  A
 * backslash escapes the next byte, so "\." checks a literal dot.
 *
 *   "...AAA.BB" -> [(3,"AAA"), (1,"BB")]
 */
std::vector<Step> parse_rule_pattern(std::string_view pattern);

enum class MatcherKind { Exact, Prefix, Suffix, Contains };

struct MatcherSteps {
    std::vector<Step> steps;
    std::optional<std::uint16_t> length_guard;
};

MatcherSteps from_string_matcher(MatcherKind kind, std::string_view literal,
                                 std::optional<std::size_t> value_len_hint = std::nullopt);

struct MatchScope {
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    std::uint8_t field_index = 0;
};

/// Direct interpretation of the rule list: first listed match wins.
/// `comparisons`, when given, is incremented once per check evaluated.
std::optional<QueueId> oracle_match(std::span<const SkipAndCheckRule> rules, ByteSpan field_bytes,
                                    const MatchScope &scope, std::uint64_t *comparisons = nullptr);

std::optional<QueueId> oracle_match(std::span<const SkipAndCheckRule> rules, std::string_view field_bytes,
                                    const MatchScope &scope, std::uint64_t *comparisons = nullptr);

/// Oracle decision for a whole request: the scope's field is matched against
/// the rule list, falling back to the scope's default queue.
std::optional<QueueId> oracle_dispatch(const RuleSet &rules, const Request &request,
                                       std::uint64_t *comparisons = nullptr);

struct RamEntry {
    std::uint8_t state = 0;
    std::uint8_t field_index = 0;
    std::uint8_t skip_len = 0;
    std::uint8_t check_len = 0;
    std::optional<QueueId> terminal_queue;
    std::optional<std::uint16_t> length_guard;

    bool terminal() const { return skip_len == 0 && check_len == 0; }
    /// field_index | skip_len | check_len | state, MSB first.
    std::uint32_t pack() const;
    bool operator==(const RamEntry &) const = default;
};

struct CamEntry {
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    std::uint8_t field_index = 0;
    std::uint8_t state = 0;
    std::string pattern;
    std::uint8_t next_state = 0;

    /// 24-bit scope | state | pattern zero-filled to 8 bytes; 96 bits at W = 8.
    std::array<std::uint8_t, 12> pack() const;
    bool operator==(const CamEntry &) const = default;
};

struct RamRow {
    ScopeId scope;
    RamEntry entry;
};

/// Compiled skip-and-check machines for every scope, in RAM/CAM layout.
class RuleTables {
 public:
    RuleTables() = default;
    explicit RuleTables(std::size_t cam_width) : cam_width_(cam_width) {}

    std::size_t cam_width() const { return cam_width_; }
    const std::vector<RamRow> &ram() const { return ram_; }
    const std::vector<CamEntry> &cam() const { return cam_; }
    const std::map<ScopeId, QueueId> &default_queues() const { return defaults_; }

    const RamEntry *ram_lookup(ScopeId scope, std::uint8_t state) const;
    std::optional<std::uint8_t> cam_lookup(const MatchScope &scope, std::uint8_t state, ByteSpan window) const;
    std::optional<QueueId> default_queue(ScopeId scope) const;

    void add_ram(ScopeId scope, const RamEntry &entry);
    void add_cam(const CamEntry &entry);
    void set_default_queue(ScopeId scope, QueueId queue) { defaults_[scope] = queue; }

    nlohmann::json to_json() const;
    static RuleTables from_json(const nlohmann::json &j);

 private:
    static std::uint32_t ram_key(ScopeId scope, std::uint8_t state) {
        return (std::uint32_t(scope.app_id) << 16) | (std::uint32_t(scope.req_type) << 8) | state;
    }
    static std::string cam_key(const MatchScope &scope, std::uint8_t state, ByteSpan pattern);

    std::size_t cam_width_ = kDefaultCamWidth;
    std::vector<RamRow> ram_;
    std::vector<CamEntry> cam_;
    std::unordered_map<std::uint32_t, std::size_t> ram_index_;
    std::unordered_map<std::string, std::uint8_t> cam_index_;
    std::map<ScopeId, QueueId> defaults_;
};

/*
 * Compiles rules into per-scope state machines.  Checks longer than the CAM
 * width are split into zero-skip steps; states are shared along common
 * prefixes; each distinct full path ends in a terminal RAM entry.
 *
 * Every rule of a scope must have the same field and the same
 * (skip, check length) sequence.  Throws ShapeMismatch, StateOverflow,
 * CapacityExceeded or InvalidRule rather than truncating.
 */
RuleTables compile_rules(const RuleSet &rules, std::size_t cam_width = kDefaultCamWidth);

void validate_rule(const SkipAndCheckRule &rule);

SkipAndCheckRule rule_from_json(const nlohmann::json &j);
nlohmann::json rule_to_json(const SkipAndCheckRule &rule);

/// Accepts a bare array of rules or {"rules":[...], "defaults":[...]}.
RuleSet ruleset_from_json(const nlohmann::json &j);
nlohmann::json ruleset_to_json(const RuleSet &rules);

}  // namespace qn

#endif  // QN_RULES_HPP_
