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

#include <random>

#include "qn/idl.hpp"

using namespace qn;

namespace {

Errc parse_error(std::string_view src) {
    try {
        parse_idl(src);
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected a parse error for: " << src);
    return Errc::Io;
}

RequestSchema random_schema(std::mt19937_64 &rng, int id) {
    RequestSchema s;
    s.name = "R" + std::to_string(id);
    const auto n = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int i = 0; i < n; ++i) {
        const auto kind = rng() % 2 ? FieldKind::String : FieldKind::Int32;
        s.fields.push_back({std::uint8_t(i), "f" + std::to_string(i), kind, rng() % 3 == 0});
    }
    s.fields[rng() % s.fields.size()].is_dispatch = true;
    return canonicalize(s);
}

}  // namespace

TEST_CASE("parse a two-field request with a dispatch key") {
    const auto schemas = parse_idl("request Get { string key = 0 [dispatch]; int32 flags = 1; }");
    REQUIRE(schemas.size() == 1);
    const auto &s = schemas[0];
    CHECK(s.name == "Get");
    REQUIRE(s.fields.size() == 2);
    CHECK(s.fields[0].name == "key");
    CHECK(s.fields[0].kind == FieldKind::String);
    CHECK(s.fields[0].is_dispatch);
    CHECK(s.fields[1].kind == FieldKind::Int32);
    CHECK_FALSE(s.fields[1].is_dispatch);
    CHECK(s.order == std::vector<std::uint8_t>{0, 1});
    CHECK(s.app_id == 0);
    CHECK(s.req_type == 0);
}

TEST_CASE("minimal single-field schema") {
    const auto schemas = parse_idl("request Ping { int32 x = 0 [dispatch]; }");
    REQUIRE(schemas.size() == 1);
    CHECK(schemas[0].fields.size() == 1);
    CHECK(schemas[0].dispatch_count() == 1);
}

TEST_CASE("comments and several requests") {
    const auto schemas = parse_idl(R"(
        // leading comment
        request A { string k = 0 [dispatch]; }
        /* block
           comment */
        request B { int32 v = 1; string k = 0 [dispatch]; }
    )");
    REQUIRE(schemas.size() == 2);
    CHECK(schemas[1].fields[0].name == "k");
    CHECK(schemas[1].fields[1].name == "v");
}

TEST_CASE("rejected sources") {
    CHECK(parse_error("request Bad { string a = 0; }") == Errc::NoDispatchField);
    CHECK(parse_error("request Bad { string a = 0 [dispatch]; string b = 0; }") == Errc::DuplicateIndex);
    CHECK(parse_error("request Bad { string a = 0 [dispatch]; string b = 2; }") == Errc::NonDenseIndex);
    CHECK(parse_error("request Bad { string a = 0 [dispatch]; int32 a = 1; }") == Errc::DuplicateName);
    CHECK(parse_error("request Bad { float a = 0 [dispatch]; }") == Errc::UnsupportedType);
    CHECK(parse_error("request Bad { request Inner { int32 x = 0; } }") == Errc::NestedMessage);
    CHECK(parse_error("request Bad { message Inner { int32 x = 0; } }") == Errc::NestedMessage);
    CHECK(parse_error("request A { int32 x = 0 [dispatch]; } request A { int32 y = 0 [dispatch]; }") ==
          Errc::DuplicateName);
    CHECK(parse_error("request Bad { int32 x = 0 [dispatch] }") == Errc::Syntax);
    CHECK(parse_error("request Bad { int32 x = 0 [dispatch];") == Errc::Syntax);
    CHECK(parse_error("request Bad { int32 x = 0 [dispatch]; } /* open") == Errc::Syntax);
}

TEST_CASE("parse errors carry a source position") {
    try {
        parse_idl("request Bad {\n  float a = 0 [dispatch];\n}");
        FAIL("no error");
    } catch (const IdlError &e) {
        CHECK(e.line() == 2);
        CHECK(e.column() == 3);
    }
}

TEST_CASE("canonicalize moves dispatch fields to the front, stably") {
    RequestSchema s;
    s.name = "X";
    s.fields = {{0, "a", FieldKind::Int32, false}, {1, "b", FieldKind::String, true}};
    CHECK(canonicalize(s).order == std::vector<std::uint8_t>{1, 0});

    s.fields = {{0, "a", FieldKind::Int32, true}, {1, "b", FieldKind::String, false}};
    CHECK(canonicalize(s).order == std::vector<std::uint8_t>{0, 1});

    s.fields = {{0, "a", FieldKind::Int32, true}, {1, "b", FieldKind::String, true}, {2, "c", FieldKind::Int32, false}};
    CHECK(canonicalize(s).order == std::vector<std::uint8_t>{0, 1, 2});

    s.fields = {{0, "a", FieldKind::Int32, false}, {1, "b", FieldKind::String, true},
                {2, "c", FieldKind::Int32, false}, {3, "d", FieldKind::String, true}};
    const auto c = canonicalize(s);
    CHECK(c.order == std::vector<std::uint8_t>{1, 3, 0, 2});
    CHECK(c.is_canonical());
}

TEST_CASE("property: canonicalize is idempotent") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        const auto s = random_schema(rng, i);
        CHECK(canonicalize(s) == s);
        CHECK(s.is_canonical());
    }
}

TEST_CASE("property: parse_idl inverts emit_idl_text on canonical schemas") {
    std::mt19937_64 rng(12);
    std::vector<RequestSchema> all;
    for (int i = 0; i < 300; ++i) {
        const auto s = random_schema(rng, i);
        const auto back = parse_idl(emit_idl_text(s));
        REQUIRE(back.size() == 1);
        CHECK(back[0] == s);
        all.push_back(s);
    }
    CHECK(parse_idl(emit_idl_text(all)) == all);
}

TEST_CASE("schema JSON round trip") {
    auto s = parse_idl("request Get { string key = 0 [dispatch]; int32 flags = 1; }")[0];
    s.app_id = 3;
    s.req_type = 9;
    const auto j = schema_to_json(s);
    CHECK(j.at("app_id") == 3);
    CHECK(j.at("fields").size() == 2);
    CHECK(schema_from_json(j) == s);
}

TEST_CASE("schema_from_json validates") {
    auto j = schema_to_json(parse_idl("request Get { string key = 0 [dispatch]; }")[0]);
    j["fields"][0]["dispatch"] = false;
    CHECK_THROWS_AS(schema_from_json(j), Error);
}
