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

#include "servesim/runner/profile.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "servesim/common/error.h"
#include "servesim/common/hash.h"
#include "servesim/runner/cluster.h"

namespace servesim::runner {

namespace {

ClusterConfig single_setup(const ClusterConfig& config, bool disaggregated) {
  ClusterConfig c = config;
  c.colocated_tes = disaggregated ? 0 : 1;
  c.disagg_pairs = disaggregated ? 1 : 0;
  c.policy = Policy::kRoundRobin;
  c.autoscale.enabled = false;
  c.heatmap_path.reset();
  return c;
}

double mean_jct(const ClusterConfig& config,
                const std::vector<workload::Request>& batch) {
  const auto result = run_trace(config, batch, Policy::kRoundRobin, {});
  const auto counts = result.metrics.status_counts();
  SERVESIM_CHECK(counts.completed == static_cast<int64_t>(batch.size()),
                 ErrorCode::kMissingCell,
                 "profile batch did not complete on every request");
  return result.metrics.jct().mean;
}

}  // namespace

CellShape cell_shape(const dsched::HeatmapAxes& axes, size_t row, size_t col) {
  const double p_lo =
      row == 0 ? 0.0 : static_cast<double>(axes.prefill_edges[row - 1]);
  const double p_hi = static_cast<double>(axes.prefill_edges[row]);
  const double r_lo = col == 0 ? 0.0 : axes.ratio_edges[col - 1];
  const double r_hi = axes.ratio_edges[col];
  CellShape s;
  s.prefill_len = std::max<int64_t>(1, std::llround((p_lo + p_hi) / 2.0));
  s.decode_len = std::max<int64_t>(
      1, std::llround((r_lo + r_hi) / 2.0 * static_cast<double>(s.prefill_len)));
  return s;
}

std::vector<workload::Request> cell_batch(const CellShape& shape, double rps,
                                          int64_t n, uint64_t seed) {
  SERVESIM_CHECK(rps > 0 && n >= 1, ErrorCode::kInvalidArgument,
                 "batch needs rps > 0 and n >= 1");
  std::vector<workload::Request> out;
  out.reserve(static_cast<size_t>(n));
  SplitMixStream rng(mix64(seed));
  for (int64_t i = 0; i < n; ++i) {
    workload::Request r;
    r.id = "cell-" + std::to_string(i);
    r.arrival = seconds_to_micros(static_cast<double>(i) / rps);
    r.prompt_tokens.resize(static_cast<size_t>(shape.prefill_len));
    for (auto& t : r.prompt_tokens) {
      t = static_cast<TokenId>(rng.next() % 32000);
    }
    r.true_decode_len = shape.decode_len;
    out.push_back(std::move(r));
  }
  return out;
}

double mean_jct_colocated(const ClusterConfig& config,
                          const std::vector<workload::Request>& batch) {
  return mean_jct(single_setup(config, false), batch);
}

double mean_jct_disaggregated(const ClusterConfig& config,
                              const std::vector<workload::Request>& batch) {
  return mean_jct(single_setup(config, true), batch);
}

ProfileResult profile_heatmap(const ClusterConfig& config,
                              const std::vector<double>& rps_grid,
                              uint64_t seed) {
  SERVESIM_CHECK(!rps_grid.empty(), ErrorCode::kConfigError,
                 "empty RPS grid");
  const auto& axes = config.heatmap_axes;
  const ClusterConfig coloc = single_setup(config, false);
  const ClusterConfig disagg = single_setup(config, true);

  struct Job {
    size_t rps_idx;
    size_t row;
    size_t col;
  };
  std::vector<Job> jobs;
  for (size_t k = 0; k < rps_grid.size(); ++k) {
    for (size_t r = 0; r < axes.rows(); ++r) {
      for (size_t c = 0; c < axes.cols(); ++c) {
        jobs.push_back({k, r, c});
      }
    }
  }
  std::vector<std::pair<double, double>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      try {
        const auto shape = cell_shape(axes, job.row, job.col);
        const uint64_t batch_seed =
            mix64(seed ^ mix64(job.row * 1000003ULL + job.col * 7919ULL +
                               job.rps_idx * 104729ULL));
        const auto batch =
            cell_batch(shape, rps_grid[job.rps_idx],
                       config.profile.requests_per_cell, batch_seed);
        results[i] = {mean_jct(coloc, batch), mean_jct(disagg, batch)};
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  size_t workers = config.profile.workers > 0
                       ? static_cast<size_t>(config.profile.workers)
                       : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, jobs.size());
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto& t : pool) {
    t.join();
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }

  ProfileResult out;
  for (double rps : rps_grid) {
    out.profiles.push_back(dsched::JctProfile::empty(axes, rps));
  }
  for (size_t i = 0; i < jobs.size(); ++i) {
    auto& p = out.profiles[jobs[i].rps_idx];
    p.colocated[jobs[i].row][jobs[i].col] = results[i].first;
    p.disaggregated[jobs[i].row][jobs[i].col] = results[i].second;
  }
  out.heatmaps = dsched::build_heatmap(axes, out.profiles);
  out.sign_stability = dsched::sign_stability(out.heatmaps.per_rps);
  return out;
}

nlohmann::json profile_to_json(const ProfileResult& result) {
  auto j = dsched::heatmap_set_to_json(result.heatmaps);
  auto raw = nlohmann::json::array();
  for (const auto& p : result.profiles) {
    auto grid = [](const auto& cells) {
      auto rows = nlohmann::json::array();
      for (const auto& row : cells) {
        auto out = nlohmann::json::array();
        for (const auto& v : row) {
          out.push_back(v ? nlohmann::json(*v) : nlohmann::json());
        }
        rows.push_back(out);
      }
      return rows;
    };
    raw.push_back({{"rps", p.rps},
                   {"jct_colocated_us", grid(p.colocated)},
                   {"jct_disaggregated_us", grid(p.disaggregated)}});
  }
  j["profiles"] = raw;
  return j;
}

}  // namespace servesim::runner
