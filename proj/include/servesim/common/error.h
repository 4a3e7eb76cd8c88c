/* Copyright 2026 The servesim Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace servesim {

// Every failure surfaced by the library carries one of these codes so that
// callers (tests, CLI, python) can dispatch without string matching.
enum class ErrorCode : int32_t {
  kPastEvent,
  kInvalidSpec,
  kParseError,
  kInvalidCoverage,
  kInsufficientNpuMemory,
  kOutOfMemory,
  kUnknownTicket,
  kUnknownBlock,
  kDoubleFree,
  kUnknownEndpoint,
  kNotInGroup,
  kNotReady,
  kCapacityExhausted,
  kMissingCell,
  kInsufficientResources,
  kNoSource,
  kDramFull,
  kNoPod,
  kConfigError,
  kInvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " +
                           message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Trace/config parse failure; line is 1-based, 0 when not line oriented.
class ParseError : public Error {
 public:
  ParseError(int64_t line, const std::string& message)
      : Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  int64_t line() const { return line_; }

 private:
  int64_t line_;
};

#define SERVESIM_CHECK(cond, code, msg)      \
  do {                                       \
    if (!(cond)) {                           \
      throw ::servesim::Error((code), (msg)); \
    }                                        \
  } while (0)

}  // namespace servesim
