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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "servesim/workload/request.h"

namespace servesim::workload {

enum class ArrivalProcess : int32_t {
  kPoisson,    // exponential gaps with mean 1/rate
  kFixedRate,  // deterministic gaps of exactly 1/rate
};

struct ArrivalSpec {
  ArrivalProcess process = ArrivalProcess::kPoisson;
  double rate_rps = 1.0;
  // Generation stops at whichever bound is hit first; at least one is set.
  std::optional<double> horizon_s;
  std::optional<int64_t> num_requests;
};

enum class LengthDist : int32_t {
  kConstant,
  kUniform,    // integer uniform in [min, max]
  kLogNormal,  // median * exp(sigma * N(0,1)), clamped to [min, max]
  kRatioBand,  // decode only: uniform ratio in [lo, hi] times prompt length
};

struct LengthSpec {
  LengthDist dist = LengthDist::kConstant;
  int64_t value = 1;
  int64_t min = 1;
  int64_t max = 1;
  double median = 1.0;
  double sigma = 0.0;
  double ratio_lo = 0.0;
  double ratio_hi = 0.0;

  static LengthSpec constant(int64_t v);
  static LengthSpec uniform(int64_t lo, int64_t hi);
  static LengthSpec log_normal(double median, double sigma, int64_t lo,
                               int64_t hi);
  static LengthSpec ratio_band(double lo, double hi);
};

struct PrefixGroupSpec {
  int32_t prefix_len = 0;
  double share = 1.0;
};

struct WorkloadSpec {
  ArrivalSpec arrival;
  LengthSpec prompt_len = LengthSpec::constant(2048);
  LengthSpec decode_len = LengthSpec::constant(205);
  // Empty means no shared prefixes. Otherwise shares sum to 1.
  std::vector<PrefixGroupSpec> prefix_groups;
  // Requests in a prefix group carry context_id "ctx-<group>".
  bool group_context_ids = false;
  int32_t vocab_size = 32000;
  uint64_t seed = 0;
};

// Throws Error(kInvalidSpec).
void validate(const WorkloadSpec& spec);

// Pure function of the spec (including seed). Arrivals are sorted.
std::vector<Request> generate_trace(const WorkloadSpec& spec);

// Deterministic prefix tokens for a shared group.
TokenSeq group_prefix_tokens(uint64_t seed, int32_t group, int32_t length,
                             int32_t vocab_size);

WorkloadSpec workload_spec_from_json(const nlohmann::json& j);
nlohmann::json workload_spec_to_json(const WorkloadSpec& spec);

enum class TraceFormat : int32_t {
  kInline,   // every prompt is an explicit token array
  kCompact,  // grouped prompts reference a group_def line plus a suffix
};

// JSONL: one object per line. Request lines carry {id, arrival_us, prompt,
// decode_len, context_id?, priority?, prefix?}. In compact form a line
// {"group_def": g, "tokens": [...]} precedes the first request of group g,
// and such requests store prompt as {group, prefix_len, suffix}.
void save_trace(const std::vector<Request>& reqs, std::ostream& os,
                TraceFormat format = TraceFormat::kInline);
void save_trace(const std::vector<Request>& reqs,
                const std::filesystem::path& path,
                TraceFormat format = TraceFormat::kInline);

// Throws ParseError carrying the 1-based line number.
std::vector<Request> load_trace(std::istream& is);
std::vector<Request> load_trace(const std::filesystem::path& path);

}  // namespace servesim::workload
