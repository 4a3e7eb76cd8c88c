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

#include "servesim/common/error.h"

namespace servesim {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kPastEvent:
      return "PastEvent";
    case ErrorCode::kInvalidSpec:
      return "InvalidSpec";
    case ErrorCode::kParseError:
      return "ParseError";
    case ErrorCode::kInvalidCoverage:
      return "InvalidCoverage";
    case ErrorCode::kInsufficientNpuMemory:
      return "InsufficientNpuMemory";
    case ErrorCode::kOutOfMemory:
      return "OutOfMemory";
    case ErrorCode::kUnknownTicket:
      return "UnknownTicket";
    case ErrorCode::kUnknownBlock:
      return "UnknownBlock";
    case ErrorCode::kDoubleFree:
      return "DoubleFree";
    case ErrorCode::kUnknownEndpoint:
      return "UnknownEndpoint";
    case ErrorCode::kNotInGroup:
      return "NotInGroup";
    case ErrorCode::kNotReady:
      return "NotReady";
    case ErrorCode::kCapacityExhausted:
      return "CapacityExhausted";
    case ErrorCode::kMissingCell:
      return "MissingCell";
    case ErrorCode::kInsufficientResources:
      return "InsufficientResources";
    case ErrorCode::kNoSource:
      return "NoSource";
    case ErrorCode::kDramFull:
      return "DramFull";
    case ErrorCode::kNoPod:
      return "NoPod";
    case ErrorCode::kConfigError:
      return "ConfigError";
    case ErrorCode::kInvalidArgument:
      return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace servesim
