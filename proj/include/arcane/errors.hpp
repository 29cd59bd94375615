// Copyright 2026 The arcane-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arcane {

enum class Errc {
  kFieldOverflow,
  kBadKernelId,
  kNotXmnmc,
  kInvalidEew,
  kOutOfBounds,
  kMisaligned,
  kLockNotHeld,
  kNoEvictableLine,
  kDoubleRelease,
  kAtFull,
  kVlTooLarge,
  kNotComputeLine,
  kCapacityExceeded,
  kNotResident,
  kShapeMismatch,
  kIllegalInstruction,
  kParseError,
  kConfigInvariantViolated,
  kDeadlock,
};

std::string_view errc_name(Errc code);

// All simulator failures are reported through this type; `code()` carries the
// machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what)
      : Error(Errc::kParseError, "line " + std::to_string(line) + ", column " +
                                     std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace arcane
