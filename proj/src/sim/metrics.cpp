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

#include "servesim/sim/metrics.h"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>

namespace servesim::sim {

std::optional<Micros> RequestRecord::ttft() const {
  if (token_times.empty()) {
    return std::nullopt;
  }
  return token_times.front() - arrival;
}

std::optional<double> RequestRecord::tpot() const {
  if (token_times.size() < 2) {
    return std::nullopt;
  }
  return static_cast<double>(token_times.back() - token_times.front()) /
         static_cast<double>(token_times.size() - 1);
}

std::optional<Micros> RequestRecord::jct() const {
  if (!completion) {
    return std::nullopt;
  }
  return *completion - arrival;
}

double percentile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) {
    return 0.0;
  }
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<size_t>(std::ceil(q / 100.0 * n));
  rank = std::clamp<size_t>(rank, 1, values.size());
  return values[rank - 1];
}

Distribution summarize(const std::vector<double>& values) {
  Distribution d;
  d.count = static_cast<int64_t>(values.size());
  if (values.empty()) {
    return d;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  d.mean = sum / static_cast<double>(values.size());
  d.p50 = percentile_nearest_rank(values, 50.0);
  d.p90 = percentile_nearest_rank(values, 90.0);
  d.p99 = percentile_nearest_rank(values, 99.0);
  return d;
}

MetricsStore::Handle MetricsStore::on_arrival(const std::string& request_id,
                                              Micros arrival,
                                              int64_t prompt_tokens) {
  RequestRecord r;
  r.request_id = request_id;
  r.arrival = arrival;
  r.prompt_tokens = prompt_tokens;
  records_.push_back(std::move(r));
  return records_.size() - 1;
}

void MetricsStore::on_assigned(Handle h, int64_t te_id,
                               const std::string& te_kind) {
  auto& r = records_.at(h);
  r.te_id = te_id;
  r.te_kind = te_kind;
}

void MetricsStore::on_cached_prefix(Handle h, int64_t tokens) {
  records_.at(h).cached_prefix_tokens = tokens;
}

void MetricsStore::on_started(Handle h) {
  auto& r = records_.at(h);
  if (r.status == RequestStatus::kQueued) {
    r.status = RequestStatus::kInFlight;
  }
}

void MetricsStore::on_token(Handle h, Micros t) {
  auto& r = records_.at(h);
  assert(r.token_times.empty() || r.token_times.back() < t);
  r.token_times.push_back(t);
  if (r.status == RequestStatus::kQueued) {
    r.status = RequestStatus::kInFlight;
  }
}

void MetricsStore::on_completed(Handle h, Micros t) {
  auto& r = records_.at(h);
  r.completion = t;
  r.status = RequestStatus::kCompleted;
}

void MetricsStore::on_rejected(Handle h, Micros t) {
  auto& r = records_.at(h);
  r.completion.reset();
  r.status = RequestStatus::kRejected;
  (void)t;
}

StatusCounts MetricsStore::status_counts() const {
  StatusCounts c;
  for (const auto& r : records_) {
    switch (r.status) {
      case RequestStatus::kQueued:
        ++c.queued;
        break;
      case RequestStatus::kInFlight:
        ++c.in_flight;
        break;
      case RequestStatus::kCompleted:
        ++c.completed;
        break;
      case RequestStatus::kRejected:
        ++c.rejected;
        break;
    }
  }
  return c;
}

Distribution MetricsStore::ttft() const {
  std::vector<double> v;
  for (const auto& r : records_) {
    if (r.status == RequestStatus::kCompleted) {
      v.push_back(static_cast<double>(*r.ttft()));
    }
  }
  return summarize(v);
}

Distribution MetricsStore::tpot() const {
  std::vector<double> v;
  for (const auto& r : records_) {
    if (r.status == RequestStatus::kCompleted) {
      if (auto t = r.tpot()) {
        v.push_back(*t);
      }
    }
  }
  return summarize(v);
}

Distribution MetricsStore::jct() const {
  std::vector<double> v;
  for (const auto& r : records_) {
    if (auto j = r.jct()) {
      v.push_back(static_cast<double>(*j));
    }
  }
  return summarize(v);
}

int64_t MetricsStore::output_tokens() const {
  int64_t n = 0;
  for (const auto& r : records_) {
    n += static_cast<int64_t>(r.token_times.size());
  }
  return n;
}

int64_t MetricsStore::cached_prefix_tokens() const {
  int64_t n = 0;
  for (const auto& r : records_) {
    n += r.cached_prefix_tokens;
  }
  return n;
}

void MetricsStore::write_csv(std::ostream& os) const {
  os << "request_id,arrival_us,ttft_us,tpot_us,jct_us,te_id,te_kind,"
        "cached_prefix_tokens\n";
  char buf[64];
  for (const auto& r : records_) {
    os << r.request_id << ',' << r.arrival << ',';
    if (r.status == RequestStatus::kCompleted) {
      os << *r.ttft();
    }
    os << ',';
    if (auto t = r.tpot(); t && r.status == RequestStatus::kCompleted) {
      std::snprintf(buf, sizeof(buf), "%.3f", *t);
      os << buf;
    }
    os << ',';
    if (auto j = r.jct()) {
      os << *j;
    }
    os << ',' << r.te_id << ',' << r.te_kind << ',' << r.cached_prefix_tokens
       << '\n';
  }
}

nlohmann::json MetricsStore::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& r : records_) {
    nlohmann::json row;
    row["request_id"] = r.request_id;
    row["arrival_us"] = r.arrival;
    const bool done = r.status == RequestStatus::kCompleted;
    row["ttft_us"] = done ? nlohmann::json(*r.ttft()) : nlohmann::json();
    auto tpot = r.tpot();
    row["tpot_us"] = (done && tpot) ? nlohmann::json(*tpot) : nlohmann::json();
    auto jct = r.jct();
    row["jct_us"] = jct ? nlohmann::json(*jct) : nlohmann::json();
    row["te_id"] = r.te_id;
    row["te_kind"] = r.te_kind;
    row["cached_prefix_tokens"] = r.cached_prefix_tokens;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace servesim::sim
