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

#include "qn/rules.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

namespace qn {

std::size_t SkipAndCheckRule::scanned_bytes() const {
    std::size_t n = 0;
    for (const auto &s : steps) n += s.skip + s.check.size();
    return n;
}

std::vector<Step> parse_rule_pattern(std::string_view pattern) {
    if (pattern.empty()) throw Error(Errc::InvalidPattern, "empty dispatch pattern");
    std::vector<Step> steps;
    std::size_t pending_skip = 0;
    bool in_check = false;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        char c = pattern[i];
        if (c == '.') {
            pending_skip++;
            in_check = false;
            continue;
        }
        if (c == '\\') {
            if (++i == pattern.size()) throw Error(Errc::InvalidPattern, "dangling escape in pattern");
            c = pattern[i];
        }
        if (!in_check) {
            steps.push_back({pending_skip, {}});
            pending_skip = 0;
            in_check = true;
        }
        steps.back().check += c;
    }
    if (steps.empty()) throw Error(Errc::InvalidPattern, "pattern has no bytes to check");
    if (pending_skip)
        throw Error(Errc::InvalidPattern, "pattern cannot end in a skip: " + std::string(pattern));
    return steps;
}

MatcherSteps from_string_matcher(MatcherKind kind, std::string_view literal,
                                 std::optional<std::size_t> value_len_hint) {
    if (literal.empty()) throw Error(Errc::InvalidPattern, "string matcher literal is empty");
    switch (kind) {
    case MatcherKind::Prefix:
        if (value_len_hint && *value_len_hint < literal.size())
            throw Error(Errc::InvalidPattern, "prefix longer than the value it must match");
        return {{{0, std::string(literal)}}, std::nullopt};
    case MatcherKind::Exact:
        if (value_len_hint && *value_len_hint != literal.size())
            throw Error(Errc::InvalidPattern, "exact literal length differs from value length");
        if (literal.size() > kMaxFieldBytes) throw Error(Errc::InvalidPattern, "exact literal too long");
        return {{{0, std::string(literal)}}, static_cast<std::uint16_t>(literal.size())};
    case MatcherKind::Suffix:
        throw Error(Errc::UnsupportedMatcher, "suffix matchers are not expressible as skip-and-check");
    case MatcherKind::Contains:
        throw Error(Errc::UnsupportedMatcher, "contains matchers are not expressible as skip-and-check");
    }
    throw Error(Errc::UnsupportedMatcher, "unknown matcher kind");
}

std::optional<QueueId> oracle_match(std::span<const SkipAndCheckRule> rules, ByteSpan field,
                                    const MatchScope &scope, std::uint64_t *comparisons) {
    for (const auto &rule : rules) {
        if (rule.app_id != scope.app_id || rule.req_type != scope.req_type || rule.field_index != scope.field_index)
            continue;
        std::size_t pos = 0;
        bool ok = true;
        for (const auto &step : rule.steps) {
            pos += step.skip;
            if (pos + step.check.size() > field.size()) {
                ok = false;
                break;
            }
            if (comparisons) ++*comparisons;
            if (std::memcmp(field.data() + pos, step.check.data(), step.check.size()) != 0) {
                ok = false;
                break;
            }
            pos += step.check.size();
        }
        if (ok && rule.length_guard && field.size() != *rule.length_guard) ok = false;
        if (ok) return rule.queue;
    }
    return std::nullopt;
}

std::optional<QueueId> oracle_match(std::span<const SkipAndCheckRule> rules, std::string_view field,
                                    const MatchScope &scope, std::uint64_t *comparisons) {
    return oracle_match(rules, ByteSpan(reinterpret_cast<const std::uint8_t *>(field.data()), field.size()), scope,
                        comparisons);
}

std::optional<QueueId> oracle_dispatch(const RuleSet &rules, const Request &request, std::uint64_t *comparisons) {
    const ScopeId scope{request.schema->app_id, request.schema->req_type};
    auto fallback = [&]() -> std::optional<QueueId> {
        auto it = rules.default_queues.find(scope);
        if (it == rules.default_queues.end()) return std::nullopt;
        return it->second;
    };
    const auto rule = std::find_if(rules.rules.begin(), rules.rules.end(), [&](const SkipAndCheckRule &r) {
        return r.app_id == scope.app_id && r.req_type == scope.req_type;
    });
    if (rule == rules.rules.end() || rule->field_index >= request.values.size()) return fallback();
    Bytes value;
    append_tlv(value, rule->field_index, request.values[rule->field_index]);
    const MatchScope ms{scope.app_id, scope.req_type, rule->field_index};
    if (auto q = oracle_match(rules.rules, ByteSpan(value).subspan(kTlvHeaderBytes), ms, comparisons)) return q;
    return fallback();
}

std::uint32_t RamEntry::pack() const {
    return (std::uint32_t(field_index) << 24) | (std::uint32_t(skip_len) << 16) | (std::uint32_t(check_len) << 8) |
           state;
}

std::array<std::uint8_t, 12> CamEntry::pack() const {
    std::array<std::uint8_t, 12> out{};
    out[0] = app_id;
    out[1] = req_type;
    out[2] = field_index;
    out[3] = state;
    std::memcpy(out.data() + 4, pattern.data(), std::min<std::size_t>(pattern.size(), 8));
    return out;
}

std::string RuleTables::cam_key(const MatchScope &scope, std::uint8_t state, ByteSpan pattern) {
    std::string key;
    key.reserve(4 + pattern.size());
    key += static_cast<char>(scope.app_id);
    key += static_cast<char>(scope.req_type);
    key += static_cast<char>(scope.field_index);
    key += static_cast<char>(state);
    key.append(reinterpret_cast<const char *>(pattern.data()), pattern.size());
    return key;
}

const RamEntry *RuleTables::ram_lookup(ScopeId scope, std::uint8_t state) const {
    auto it = ram_index_.find(ram_key(scope, state));
    return it == ram_index_.end() ? nullptr : &ram_[it->second].entry;
}

std::optional<std::uint8_t> RuleTables::cam_lookup(const MatchScope &scope, std::uint8_t state,
                                                   ByteSpan window) const {
    auto it = cam_index_.find(cam_key(scope, state, window));
    if (it == cam_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<QueueId> RuleTables::default_queue(ScopeId scope) const {
    auto it = defaults_.find(scope);
    if (it == defaults_.end()) return std::nullopt;
    return it->second;
}

void RuleTables::add_ram(ScopeId scope, const RamEntry &entry) {
    if (ram_.size() >= kRamCapacity)
        throw Error(Errc::CapacityExceeded, "RAM capacity of " + std::to_string(kRamCapacity) + " entries exceeded");
    if (!ram_index_.emplace(ram_key(scope, entry.state), ram_.size()).second)
        throw Error(Errc::InvalidRule, "duplicate RAM entry for state " + std::to_string(entry.state));
    ram_.push_back({scope, entry});
}

void RuleTables::add_cam(const CamEntry &entry) {
    if (cam_.size() >= kCamCapacity)
        throw Error(Errc::CapacityExceeded, "CAM capacity of " + std::to_string(kCamCapacity) + " entries exceeded");
    if (entry.pattern.empty() || entry.pattern.size() > cam_width_)
        throw Error(Errc::InvalidRule, "CAM pattern width out of range");
    const MatchScope scope{entry.app_id, entry.req_type, entry.field_index};
    const ByteSpan pat(reinterpret_cast<const std::uint8_t *>(entry.pattern.data()), entry.pattern.size());
    if (!cam_index_.emplace(cam_key(scope, entry.state, pat), entry.next_state).second)
        throw Error(Errc::InvalidRule, "duplicate CAM entry");
    cam_.push_back(entry);
}

void validate_rule(const SkipAndCheckRule &rule) {
    if (rule.steps.empty()) throw Error(Errc::InvalidRule, "rule has no skip-and-check steps");
    for (const auto &s : rule.steps) {
        if (s.check.empty()) throw Error(Errc::InvalidRule, "rule step has an empty check");
        if (s.skip > kMaxSkip)
            throw Error(Errc::InvalidRule, "skip of " + std::to_string(s.skip) + " exceeds the 8-bit RAM field");
    }
    if (rule.scanned_bytes() > kByteStreamCapacity)
        throw Error(Errc::InvalidRule, "rule scans more bytes than the ByteStream holds");
}

namespace {

struct Chunk {
    std::size_t skip;
    std::string bytes;
};

std::vector<Chunk> split_steps(const std::vector<Step> &steps, std::size_t width) {
    std::vector<Chunk> out;
    for (const auto &s : steps) {
        for (std::size_t off = 0; off < s.check.size(); off += width)
            out.push_back({off == 0 ? s.skip : 0, s.check.substr(off, width)});
    }
    return out;
}

bool same_shape(const std::vector<Chunk> &a, const std::vector<Chunk> &b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].skip != b[i].skip || a[i].bytes.size() != b[i].bytes.size()) return false;
    }
    return true;
}

}  // namespace

RuleTables compile_rules(const RuleSet &rules, std::size_t cam_width) {
    if (cam_width == 0 || cam_width > kSegmentBytes)
        throw Error(Errc::InvalidConfig, "CAM width must be in 1..64 bytes");
    RuleTables tables(cam_width);
    for (const auto &[scope, q] : rules.default_queues) tables.set_default_queue(scope, q);

    // Scopes in first-appearance order; rule order within a scope preserved.
    std::vector<ScopeId> scope_order;
    std::map<ScopeId, std::vector<const SkipAndCheckRule *>> groups;
    for (const auto &r : rules.rules) {
        validate_rule(r);
        const ScopeId id{r.app_id, r.req_type};
        auto [it, inserted] = groups.try_emplace(id);
        if (inserted) scope_order.push_back(id);
        it->second.push_back(&r);
    }

    for (const auto &scope : scope_order) {
        const auto &group = groups[scope];
        const std::string where =
            "scope app " + std::to_string(scope.app_id) + " req_type " + std::to_string(scope.req_type) + ": ";
        const std::uint8_t field = group.front()->field_index;
        const auto shape = split_steps(group.front()->steps, cam_width);

        struct Terminal {
            std::optional<std::uint16_t> guard;
        };
        std::map<std::pair<std::uint8_t, std::string>, std::uint8_t> edges;
        std::map<std::uint8_t, Terminal> terminals;
        std::size_t n_states = 1;
        std::vector<RamRow> ram_rows;
        std::vector<CamEntry> cam_rows;

        ram_rows.push_back({scope, RamEntry{0, field, static_cast<std::uint8_t>(shape[0].skip),
                                            static_cast<std::uint8_t>(shape[0].bytes.size()), {}, {}}});

        for (const auto *rule : group) {
            if (rule->field_index != field)
                throw Error(Errc::ShapeMismatch, where + "rules target different fields");
            const auto chunks = split_steps(rule->steps, cam_width);
            if (!same_shape(chunks, shape))
                throw Error(Errc::ShapeMismatch, where + "rules have different skip/check shapes");

            std::uint8_t state = 0;
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                auto key = std::make_pair(state, chunks[i].bytes);
                auto it = edges.find(key);
                if (it == edges.end()) {
                    if (n_states >= kMaxStatesPerScope)
                        throw Error(Errc::StateOverflow, where + "more than " + std::to_string(kMaxStatesPerScope) +
                                                             " states");
                    const auto next = static_cast<std::uint8_t>(n_states++);
                    it = edges.emplace(key, next).first;
                    cam_rows.push_back({scope.app_id, scope.req_type, field, state, chunks[i].bytes, next});
                    const bool last = i + 1 == chunks.size();
                    RamEntry e{next, field, 0, 0, {}, {}};
                    if (last) {
                        e.terminal_queue = rule->queue;
                        e.length_guard = rule->length_guard;
                        terminals[next] = {rule->length_guard};
                    } else {
                        e.skip_len = static_cast<std::uint8_t>(chunks[i + 1].skip);
                        e.check_len = static_cast<std::uint8_t>(chunks[i + 1].bytes.size());
                    }
                    ram_rows.push_back({scope, e});
                } else if (i + 1 == chunks.size()) {
                    // Identical pattern to an earlier rule: the earlier one wins
                    // unless the two differ only by length guard.
                    if (terminals[it->second].guard != rule->length_guard)
                        throw Error(Errc::InvalidRule,
                                    where + "identical patterns with different length guards need separate scopes");
                }
                state = it->second;
            }
        }

        for (const auto &row : ram_rows) tables.add_ram(row.scope, row.entry);
        for (const auto &c : cam_rows) tables.add_cam(c);
    }
    return tables;
}

namespace {

bool printable(const std::string &s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isprint(static_cast<unsigned char>(c)); });
}

std::string hex_of(const std::string &s) {
    return to_hex(ByteSpan(reinterpret_cast<const std::uint8_t *>(s.data()), s.size()));
}

std::string string_of_hex(const std::string &h) {
    const auto b = from_hex(h);
    return std::string(b.begin(), b.end());
}

}  // namespace

nlohmann::json RuleTables::to_json() const {
    nlohmann::json ram = nlohmann::json::array();
    for (const auto &r : ram_) {
        nlohmann::json e{{"app_id", r.scope.app_id},       {"req_type", r.scope.req_type},
                         {"state", r.entry.state},         {"field_index", r.entry.field_index},
                         {"skip_len", r.entry.skip_len},   {"check_len", r.entry.check_len},
                         {"packed", r.entry.pack()}};
        if (r.entry.terminal_queue) e["terminal_queue"] = *r.entry.terminal_queue;
        if (r.entry.length_guard) e["length_guard"] = *r.entry.length_guard;
        ram.push_back(std::move(e));
    }
    nlohmann::json cam = nlohmann::json::array();
    for (const auto &c : cam_) {
        nlohmann::json e{{"app_id", c.app_id},   {"req_type", c.req_type},
                         {"field_index", c.field_index}, {"state", c.state},
                         {"pattern_hex", hex_of(c.pattern)}, {"next_state", c.next_state}};
        if (printable(c.pattern)) e["pattern"] = c.pattern;
        cam.push_back(std::move(e));
    }
    nlohmann::json defaults = nlohmann::json::array();
    for (const auto &[scope, q] : defaults_)
        defaults.push_back({{"app_id", scope.app_id}, {"req_type", scope.req_type}, {"queue", q}});
    return {{"cam_width", cam_width_}, {"ram", ram}, {"cam", cam}, {"defaults", defaults}};
}

RuleTables RuleTables::from_json(const nlohmann::json &j) {
    try {
        RuleTables t(j.value("cam_width", kDefaultCamWidth));
        for (const auto &e : j.at("ram")) {
            RamEntry r;
            r.state = e.at("state").get<std::uint8_t>();
            r.field_index = e.at("field_index").get<std::uint8_t>();
            r.skip_len = e.at("skip_len").get<std::uint8_t>();
            r.check_len = e.at("check_len").get<std::uint8_t>();
            if (e.contains("terminal_queue")) r.terminal_queue = e.at("terminal_queue").get<QueueId>();
            if (e.contains("length_guard")) r.length_guard = e.at("length_guard").get<std::uint16_t>();
            t.add_ram({e.at("app_id").get<std::uint8_t>(), e.at("req_type").get<std::uint8_t>()}, r);
        }
        for (const auto &e : j.at("cam")) {
            CamEntry c;
            c.app_id = e.at("app_id").get<std::uint8_t>();
            c.req_type = e.at("req_type").get<std::uint8_t>();
            c.field_index = e.at("field_index").get<std::uint8_t>();
            c.state = e.at("state").get<std::uint8_t>();
            c.pattern = string_of_hex(e.at("pattern_hex").get<std::string>());
            c.next_state = e.at("next_state").get<std::uint8_t>();
            t.add_cam(c);
        }
        for (const auto &d : j.value("defaults", nlohmann::json::array()))
            t.set_default_queue({d.at("app_id").get<std::uint8_t>(), d.at("req_type").get<std::uint8_t>()},
                                d.at("queue").get<QueueId>());
        return t;
    } catch (const nlohmann::json::exception &e) {
        throw Error(Errc::InvalidConfig, std::string("tables json: ") + e.what());
    }
}

SkipAndCheckRule rule_from_json(const nlohmann::json &j) {
    try {
        SkipAndCheckRule r;
        r.app_id = j.at("app_id").get<std::uint8_t>();
        r.req_type = j.at("req_type").get<std::uint8_t>();
        r.field_index = j.value("field", std::uint8_t{0});
        r.queue = j.at("queue").get<QueueId>();
        int forms = 0;
        if (j.contains("pattern")) {
            r.steps = parse_rule_pattern(j.at("pattern").get<std::string>());
            ++forms;
        }
        if (j.contains("steps")) {
            for (const auto &s : j.at("steps")) {
                Step st;
                st.skip = s.value("skip", std::size_t{0});
                st.check = s.contains("check_hex") ? string_of_hex(s.at("check_hex").get<std::string>())
                                                   : s.at("check").get<std::string>();
                r.steps.push_back(std::move(st));
            }
            ++forms;
        }
        for (const auto &[key, kind] : {std::pair{"exact", MatcherKind::Exact}, {"prefix", MatcherKind::Prefix}}) {
            if (!j.contains(key)) continue;
            auto m = from_string_matcher(kind, j.at(key).get<std::string>());
            r.steps = std::move(m.steps);
            r.length_guard = m.length_guard;
            ++forms;
        }
        if (forms != 1)
            throw Error(Errc::InvalidRule, "rule needs exactly one of pattern, steps, exact, prefix");
        if (j.contains("length_guard")) r.length_guard = j.at("length_guard").get<std::uint16_t>();
        validate_rule(r);
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw Error(Errc::InvalidConfig, std::string("rule json: ") + e.what());
    }
}

nlohmann::json rule_to_json(const SkipAndCheckRule &rule) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto &s : rule.steps) {
        if (printable(s.check)) {
            steps.push_back({{"skip", s.skip}, {"check", s.check}});
        } else {
            steps.push_back({{"skip", s.skip}, {"check_hex", hex_of(s.check)}});
        }
    }
    nlohmann::json j{{"app_id", rule.app_id},
                     {"req_type", rule.req_type},
                     {"field", rule.field_index},
                     {"queue", rule.queue},
                     {"steps", steps}};
    if (rule.length_guard) j["length_guard"] = *rule.length_guard;
    return j;
}

RuleSet ruleset_from_json(const nlohmann::json &j) {
    RuleSet rs;
    const nlohmann::json *rules = &j;
    if (j.is_object()) {
        if (!j.contains("rules")) throw Error(Errc::InvalidConfig, "rules json object needs a \"rules\" array");
        rules = &j.at("rules");
        for (const auto &d : j.value("defaults", nlohmann::json::array())) {
            try {
                rs.default_queues[{d.at("app_id").get<std::uint8_t>(), d.at("req_type").get<std::uint8_t>()}] =
                    d.at("queue").get<QueueId>();
            } catch (const nlohmann::json::exception &e) {
                throw Error(Errc::InvalidConfig, std::string("rules json defaults: ") + e.what());
            }
        }
    }
    if (!rules->is_array()) throw Error(Errc::InvalidConfig, "rules must be a JSON array");
    for (const auto &r : *rules) rs.rules.push_back(rule_from_json(r));
    return rs;
}

nlohmann::json ruleset_to_json(const RuleSet &rs) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto &r : rs.rules) rules.push_back(rule_to_json(r));
    nlohmann::json defaults = nlohmann::json::array();
    for (const auto &[scope, q] : rs.default_queues)
        defaults.push_back({{"app_id", scope.app_id}, {"req_type", scope.req_type}, {"queue", q}});
    return {{"rules", rules}, {"defaults", defaults}};
}

}  // namespace qn
