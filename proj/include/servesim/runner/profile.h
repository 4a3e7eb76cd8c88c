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
#include <vector>

#include <json.hpp>

#include "servesim/dsched/heatmap.h"
#include "servesim/runner/config.h"
#include "servesim/workload/request.h"

namespace servesim::runner {

// Request shape profiled for one heatmap cell: bucket midpoints.
struct CellShape {
  int64_t prefill_len = 0;
  int64_t decode_len = 1;
};

CellShape cell_shape(const dsched::HeatmapAxes& axes, size_t row, size_t col);

// n requests of one shape at a fixed rate. Token contents differ per request
// so neither setup gets prefix hits.
std::vector<workload::Request> cell_batch(const CellShape& shape, double rps,
                                          int64_t n, uint64_t seed);

// Mean JCT of a batch on one colocated TE, or on one prefill/decode pair,
// using the engine settings of config.
double mean_jct_colocated(const ClusterConfig& config,
                          const std::vector<workload::Request>& batch);
double mean_jct_disaggregated(const ClusterConfig& config,
                              const std::vector<workload::Request>& batch);

struct ProfileResult {
  std::vector<dsched::JctProfile> profiles;
  dsched::HeatmapSet heatmaps;
  double sign_stability = 0.0;
};

// Runs every (cell, rps) on both setups; simulations are independent and
// spread over config.profile.workers threads.
ProfileResult profile_heatmap(const ClusterConfig& config,
                              const std::vector<double>& rps_grid,
                              uint64_t seed);

// Heatmap file contents plus sign stability and the raw mean JCTs.
nlohmann::json profile_to_json(const ProfileResult& result);

}  // namespace servesim::runner
