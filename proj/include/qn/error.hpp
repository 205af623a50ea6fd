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

#ifndef QN_ERROR_HPP_
#define QN_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qn {

enum class Errc {
    // idl
    Syntax,
    DuplicateIndex,
    NonDenseIndex,
    DuplicateName,
    NoDispatchField,
    UnsupportedType,
    NestedMessage,
    // wire
    KindMismatch,
    FieldTooLarge,
    Truncated,
    UnknownField,
    DuplicateField,
    MissingField,
    BadLength,
    RequestTooLarge,
    DispatchTooLarge,
    ShortBuffer,
    MalformedHeader,
    // rules
    CapacityExceeded,
    ShapeMismatch,
    StateOverflow,
    InvalidRule,
    InvalidPattern,
    UnsupportedMatcher,
    // rsd / transport
    Overflow,
    Underflow,
    TableFull,
    // plumbing
    InvalidConfig,
    Io,
};

const char *errc_name(Errc code);

class Error : public std::runtime_error {
 public:
    Error(Errc code, const std::string &what)
        : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

 private:
    Errc code_;
};

/// Error raised by the IDL front end; carries a 1-based source position.
class IdlError : public Error {
 public:
    IdlError(Errc code, const std::string &what, std::size_t line, std::size_t column)
        : Error(code, std::to_string(line) + ":" + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

 private:
    std::size_t line_;
    std::size_t column_;
};

}  // namespace qn

#endif  // QN_ERROR_HPP_
