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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "servesim/sim/time.h"

namespace servesim::sim {

enum class RequestStatus : int32_t {
  kQueued,     // arrived, no work started yet
  kInFlight,   // at least one iteration touched it
  kCompleted,
  kRejected,
};

struct RequestRecord {
  std::string request_id;
  Micros arrival = 0;
  int64_t prompt_tokens = 0;
  std::vector<Micros> token_times;
  std::optional<Micros> completion;
  RequestStatus status = RequestStatus::kQueued;
  int64_t te_id = -1;
  std::string te_kind;
  int64_t cached_prefix_tokens = 0;

  std::optional<Micros> ttft() const;
  // Mean inter-token interval after the first token; needs >= 2 tokens.
  std::optional<double> tpot() const;
  std::optional<Micros> jct() const;
};

struct Distribution {
  int64_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
};

struct StatusCounts {
  int64_t queued = 0;
  int64_t in_flight = 0;
  int64_t completed = 0;
  int64_t rejected = 0;
  int64_t total() const { return queued + in_flight + completed + rejected; }
};

// Nearest-rank percentile, q in [0, 100]. Empty input yields 0.
double percentile_nearest_rank(std::vector<double> values, double q);
Distribution summarize(const std::vector<double>& values);

class MetricsStore {
 public:
  using Handle = size_t;

  Handle on_arrival(const std::string& request_id, Micros arrival,
                    int64_t prompt_tokens);
  void on_assigned(Handle h, int64_t te_id, const std::string& te_kind);
  void on_cached_prefix(Handle h, int64_t tokens);
  void on_started(Handle h);
  void on_token(Handle h, Micros t);
  void on_completed(Handle h, Micros t);
  void on_rejected(Handle h, Micros t);

  const std::vector<RequestRecord>& records() const { return records_; }
  const RequestRecord& record(Handle h) const { return records_.at(h); }
  size_t size() const { return records_.size(); }

  StatusCounts status_counts() const;
  Distribution ttft() const;
  Distribution tpot() const;
  Distribution jct() const;
  int64_t output_tokens() const;
  int64_t cached_prefix_tokens() const;

  // One row per request: request_id, arrival_us, ttft_us, tpot_us, jct_us,
  // te_id, te_kind, cached_prefix_tokens. Missing values are empty cells.
  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;

 private:
  std::vector<RequestRecord> records_;
};

}  // namespace servesim::sim
