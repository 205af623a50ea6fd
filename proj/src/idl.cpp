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

#include "qn/idl.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace qn {

const char *errc_name(Errc code) {
    switch (code) {
    case Errc::Syntax: return "syntax";
    case Errc::DuplicateIndex: return "duplicate_index";
    case Errc::NonDenseIndex: return "non_dense_index";
    case Errc::DuplicateName: return "duplicate_name";
    case Errc::NoDispatchField: return "no_dispatch_field";
    case Errc::UnsupportedType: return "unsupported_type";
    case Errc::NestedMessage: return "nested_message";
    case Errc::KindMismatch: return "kind_mismatch";
    case Errc::FieldTooLarge: return "field_too_large";
    case Errc::Truncated: return "truncated";
    case Errc::UnknownField: return "unknown_field";
    case Errc::DuplicateField: return "duplicate_field";
    case Errc::MissingField: return "missing_field";
    case Errc::BadLength: return "bad_length";
    case Errc::RequestTooLarge: return "request_too_large";
    case Errc::DispatchTooLarge: return "dispatch_too_large";
    case Errc::ShortBuffer: return "short_buffer";
    case Errc::MalformedHeader: return "malformed_header";
    case Errc::CapacityExceeded: return "capacity_exceeded";
    case Errc::ShapeMismatch: return "shape_mismatch";
    case Errc::StateOverflow: return "state_overflow";
    case Errc::InvalidRule: return "invalid_rule";
    case Errc::InvalidPattern: return "invalid_pattern";
    case Errc::UnsupportedMatcher: return "unsupported_matcher";
    case Errc::Overflow: return "overflow";
    case Errc::Underflow: return "underflow";
    case Errc::TableFull: return "table_full";
    case Errc::InvalidConfig: return "invalid_config";
    case Errc::Io: return "io";
    }
    return "unknown";
}

const char *field_kind_name(FieldKind kind) {
    return kind == FieldKind::Int32 ? "int32" : "string";
}

const FieldDef &RequestSchema::field(std::uint8_t index) const {
    if (index >= fields.size())
        throw Error(Errc::UnknownField, "schema " + name + " has no field " + std::to_string(index));
    return fields[index];
}

std::size_t RequestSchema::dispatch_count() const {
    return static_cast<std::size_t>(
        std::count_if(fields.begin(), fields.end(), [](const FieldDef &f) { return f.is_dispatch; }));
}

bool RequestSchema::is_canonical() const {
    bool seen_plain = false;
    for (auto idx : order) {
        if (fields.at(idx).is_dispatch) {
            if (seen_plain) return false;
        } else {
            seen_plain = true;
        }
    }
    return true;
}

void validate_schema(const RequestSchema &schema) {
    const std::string where = "request " + schema.name + ": ";
    if (schema.fields.empty())
        throw Error(Errc::NoDispatchField, where + "no fields");
    for (std::size_t i = 0; i < schema.fields.size(); ++i) {
        if (schema.fields[i].index != i)
            throw Error(Errc::NonDenseIndex, where + "field indices must be dense 0..n-1");
    }
    if (schema.fields.size() > 256)
        throw Error(Errc::NonDenseIndex, where + "more than 256 fields");
    if (schema.dispatch_count() == 0)
        throw Error(Errc::NoDispatchField, where + "no field is marked [dispatch]");
    std::set<std::string> names;
    for (const auto &f : schema.fields) {
        if (!names.insert(f.name).second)
            throw Error(Errc::DuplicateName, where + "duplicate field name " + f.name);
    }
    std::vector<std::uint8_t> sorted = schema.order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted.size() != schema.fields.size())
        throw Error(Errc::NonDenseIndex, where + "serialization order is not a permutation");
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] != i)
            throw Error(Errc::NonDenseIndex, where + "serialization order is not a permutation");
    }
}

RequestSchema canonicalize(RequestSchema schema) {
    if (schema.order.size() != schema.fields.size()) {
        schema.order.clear();
        for (const auto &f : schema.fields) schema.order.push_back(f.index);
    }
    std::stable_partition(schema.order.begin(), schema.order.end(),
                          [&](std::uint8_t idx) { return schema.fields.at(idx).is_dispatch; });
    return schema;
}

namespace {

enum class Tok { Ident, Number, Punct, End };

struct Token {
    Tok kind;
    std::string text;
    std::size_t line;
    std::size_t column;
};

class Lexer {
 public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            skip_space_and_comments();
            if (pos_ >= src_.size()) {
                out.push_back({Tok::End, "", line_, col_});
                return out;
            }
            const char c = src_[pos_];
            const std::size_t line = line_, col = col_;
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                std::string id;
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    id += advance();
                out.push_back({Tok::Ident, id, line, col});
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                std::string num;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    num += advance();
                out.push_back({Tok::Number, num, line, col});
            } else if (std::string_view("{}=;[]").find(c) != std::string_view::npos) {
                out.push_back({Tok::Punct, std::string(1, advance()), line, col});
            } else {
                throw IdlError(Errc::Syntax, std::string("unexpected character '") + c + "'", line, col);
            }
        }
    }

 private:
    char advance() {
        const char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (src_.substr(pos_, 2) == "//") {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (src_.substr(pos_, 2) == "/*") {
                const std::size_t line = line_, col = col_;
                advance();
                advance();
                while (pos_ < src_.size() && src_.substr(pos_, 2) != "*/") advance();
                if (pos_ >= src_.size()) throw IdlError(Errc::Syntax, "unterminated comment", line, col);
                advance();
                advance();
            } else {
                return;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

class Parser {
 public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    std::vector<RequestSchema> run() {
        std::vector<RequestSchema> out;
        std::set<std::string> names;
        while (peek().kind != Tok::End) {
            const Token &kw = peek();
            auto schema = parse_request();
            if (!names.insert(schema.name).second)
                throw IdlError(Errc::DuplicateName, "duplicate request name " + schema.name, kw.line, kw.column);
            out.push_back(std::move(schema));
        }
        return out;
    }

 private:
    const Token &peek() const { return toks_[pos_]; }
    const Token &next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const Token &t, const std::string &msg, Errc code = Errc::Syntax) {
        throw IdlError(code, msg, t.line, t.column);
    }

    const Token &expect_punct(char c) {
        const Token &t = next();
        if (t.kind != Tok::Punct || t.text[0] != c)
            fail(t, std::string("expected '") + c + "'" + describe(t));
        return t;
    }

    const Token &expect_ident(const char *what) {
        const Token &t = next();
        if (t.kind != Tok::Ident) fail(t, std::string("expected ") + what + describe(t));
        return t;
    }

    static std::string describe(const Token &t) {
        if (t.kind == Tok::End) return ", found end of input";
        return ", found '" + t.text + "'";
    }

    static bool is_message_keyword(const Token &t) {
        return t.kind == Tok::Ident && (t.text == "request" || t.text == "message");
    }

    RequestSchema parse_request() {
        const Token &kw = next();
        if (kw.kind != Tok::Ident || kw.text != "request")
            fail(kw, "expected 'request'" + describe(kw));
        RequestSchema schema;
        const Token &name = expect_ident("request name");
        schema.name = name.text;
        expect_punct('{');

        std::vector<std::pair<FieldDef, const Token *>> parsed;
        while (!(peek().kind == Tok::Punct && peek().text == "}")) {
            if (peek().kind == Tok::End) fail(peek(), "unterminated request " + schema.name);
            if (is_message_keyword(peek()))
                fail(peek(), "nested request formats are not supported", Errc::NestedMessage);
            parsed.push_back(parse_field());
        }
        const Token &close = expect_punct('}');

        std::set<unsigned> seen;
        for (const auto &[f, tok] : parsed) {
            if (!seen.insert(f.index).second)
                fail(*tok, "duplicate field index " + std::to_string(f.index), Errc::DuplicateIndex);
        }
        std::sort(parsed.begin(), parsed.end(),
                  [](const auto &a, const auto &b) { return a.first.index < b.first.index; });
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            if (parsed[i].first.index != i)
                fail(*parsed[i].second, "field indices must be dense starting at 0", Errc::NonDenseIndex);
            schema.fields.push_back(parsed[i].first);
        }
        if (schema.dispatch_count() == 0)
            fail(close, "request " + schema.name + " has no [dispatch] field", Errc::NoDispatchField);
        std::set<std::string> names;
        for (const auto &[f, tok] : parsed) {
            if (!names.insert(f.name).second)
                fail(*tok, "duplicate field name " + f.name, Errc::DuplicateName);
        }
        schema = canonicalize(std::move(schema));
        validate_schema(schema);
        return schema;
    }

    std::pair<FieldDef, const Token *> parse_field() {
        FieldDef f;
        const Token &type = expect_ident("field type");
        if (type.text == "int32") {
            f.kind = FieldKind::Int32;
        } else if (type.text == "string") {
            f.kind = FieldKind::String;
        } else {
            fail(type, "unsupported field type '" + type.text + "'", Errc::UnsupportedType);
        }
        f.name = expect_ident("field name").text;
        expect_punct('=');
        const Token &num = next();
        if (num.kind != Tok::Number) fail(num, "expected field index" + describe(num));
        if (num.text.size() > 3 || std::stoul(num.text) > 255)
            fail(num, "field index " + num.text + " exceeds 255", Errc::NonDenseIndex);
        f.index = static_cast<std::uint8_t>(std::stoul(num.text));
        if (peek().kind == Tok::Punct && peek().text == "[") {
            next();
            const Token &opt = expect_ident("field option");
            if (opt.text != "dispatch") fail(opt, "unknown field option '" + opt.text + "'");
            f.is_dispatch = true;
            expect_punct(']');
        }
        expect_punct(';');
        return {f, &num};
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<RequestSchema> parse_idl(std::string_view source) {
    return Parser(Lexer(source).run()).run();
}

std::string emit_idl_text(const RequestSchema &schema) {
    std::ostringstream os;
    os << "request " << schema.name << " {\n";
    for (const auto &f : schema.fields) {
        os << "  " << field_kind_name(f.kind) << ' ' << f.name << " = " << unsigned(f.index);
        if (f.is_dispatch) os << " [dispatch]";
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

std::string emit_idl_text(const std::vector<RequestSchema> &schemas) {
    std::string out;
    for (std::size_t i = 0; i < schemas.size(); ++i) {
        if (i) out += '\n';
        out += emit_idl_text(schemas[i]);
    }
    return out;
}

nlohmann::json schema_to_json(const RequestSchema &schema) {
    nlohmann::json fields = nlohmann::json::array();
    for (const auto &f : schema.fields) {
        fields.push_back({{"index", f.index},
                          {"name", f.name},
                          {"kind", field_kind_name(f.kind)},
                          {"dispatch", f.is_dispatch}});
    }
    return {{"name", schema.name},
            {"app_id", schema.app_id},
            {"req_type", schema.req_type},
            {"fields", fields},
            {"order", schema.order}};
}

RequestSchema schema_from_json(const nlohmann::json &j) {
    try {
        RequestSchema s;
        s.name = j.value("name", std::string("Request"));
        s.app_id = j.at("app_id").get<std::uint8_t>();
        s.req_type = j.at("req_type").get<std::uint8_t>();
        for (const auto &jf : j.at("fields")) {
            FieldDef f;
            f.index = jf.at("index").get<std::uint8_t>();
            f.name = jf.at("name").get<std::string>();
            const auto kind = jf.at("kind").get<std::string>();
            if (kind == "int32") {
                f.kind = FieldKind::Int32;
            } else if (kind == "string") {
                f.kind = FieldKind::String;
            } else {
                throw Error(Errc::UnsupportedType, "unsupported field kind " + kind);
            }
            f.is_dispatch = jf.at("dispatch").get<bool>();
            s.fields.push_back(std::move(f));
        }
        std::sort(s.fields.begin(), s.fields.end(),
                  [](const FieldDef &a, const FieldDef &b) { return a.index < b.index; });
        if (j.contains("order")) {
            s.order = j.at("order").get<std::vector<std::uint8_t>>();
        } else {
            s = canonicalize(std::move(s));
        }
        validate_schema(s);
        return s;
    } catch (const nlohmann::json::exception &e) {
        throw Error(Errc::InvalidConfig, std::string("schema json: ") + e.what());
    }
}

}  // namespace qn
