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

#ifndef QN_IDL_HPP_
#define QN_IDL_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qn/error.hpp"

namespace qn {

enum class FieldKind : std::uint8_t {
    Int32 = 0,
    String = 1,
};

const char *field_kind_name(FieldKind kind);

struct FieldDef {
    std::uint8_t index = 0;
    std::string name;
    FieldKind kind = FieldKind::Int32;
    bool is_dispatch = false;

    bool operator==(const FieldDef &) const = default;
};

/*
 * A flat request format.
 *
 * `fields` is kept sorted by index and indices are dense, so fields[i].index
 * == i.  `order` is the serialization order (a permutation of the indices);
 * after canonicalization every dispatch field precedes every other field.
 */
struct RequestSchema {
    std::string name;
    std::uint8_t app_id = 0;
    std::uint8_t req_type = 0;
    std::vector<FieldDef> fields;
    std::vector<std::uint8_t> order;

    const FieldDef &field(std::uint8_t index) const;
    std::size_t dispatch_count() const;
    bool is_canonical() const;

    bool operator==(const RequestSchema &) const = default;
};

/// Throws qn::Error if any schema invariant is violated.
void validate_schema(const RequestSchema &schema);

/// Parses every `request` block in `source`. Returned schemas are validated
/// and canonicalized; app_id and req_type are left at zero for the caller.
std::vector<RequestSchema> parse_idl(std::string_view source);

/// Stable-partitions the serialization order so dispatch fields come first.
RequestSchema canonicalize(RequestSchema schema);

std::string emit_idl_text(const RequestSchema &schema);
std::string emit_idl_text(const std::vector<RequestSchema> &schemas);

nlohmann::json schema_to_json(const RequestSchema &schema);
RequestSchema schema_from_json(const nlohmann::json &j);

}  // namespace qn

#endif  // QN_IDL_HPP_
