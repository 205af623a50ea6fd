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

#ifndef QN_TESTS_SUPPORT_HPP_
#define QN_TESTS_SUPPORT_HPP_

#include <cctype>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qn/idl.hpp"
#include "qn/wire.hpp"

namespace qn::test {

inline Bytes golden(const std::string &name) {
    std::ifstream in(std::string(QN_GOLDEN_DIR) + "/" + name);
    std::ostringstream os;
    os << in.rdbuf();
    std::string hex;
    for (char c : os.str())
        if (std::isxdigit(static_cast<unsigned char>(c))) hex += c;
    return from_hex(hex);
}

inline Bytes bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

/// Hand-rolled TLV record writer used as an independent encoder.
struct TlvBuilder {
    Bytes out;

    TlvBuilder &str(std::uint8_t index, std::string_view v) {
        out.push_back(index);
        out.push_back(1);
        out.push_back(std::uint8_t(v.size() >> 8));
        out.push_back(std::uint8_t(v.size() & 0xff));
        out.insert(out.end(), v.begin(), v.end());
        return *this;
    }
    TlvBuilder &i32(std::uint8_t index, std::int32_t v) {
        const auto u = std::uint32_t(v);
        for (std::uint8_t b : {std::uint8_t(index), std::uint8_t(0), std::uint8_t(0), std::uint8_t(4),
                               std::uint8_t(u >> 24), std::uint8_t(u >> 16), std::uint8_t(u >> 8), std::uint8_t(u)})
            out.push_back(b);
        return *this;
    }
};

inline std::shared_ptr<const RequestSchema> schema_of(std::string_view idl, std::uint8_t app_id = 0,
                                                     std::uint8_t req_type = 0) {
    auto s = parse_idl(idl).at(0);
    s.app_id = app_id;
    s.req_type = req_type;
    return std::make_shared<const RequestSchema>(s);
}

inline std::string random_string(std::mt19937_64 &rng, std::size_t n, std::string_view alphabet = "abcdefgh") {
    std::string s(n, ' ');
    for (auto &c : s) c = alphabet[rng() % alphabet.size()];
    return s;
}

}  // namespace qn::test

#endif  // QN_TESTS_SUPPORT_HPP_
