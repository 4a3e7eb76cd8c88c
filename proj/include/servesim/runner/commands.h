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
#include <optional>
#include <string>
#include <vector>

#include "servesim/runner/cluster.h"
#include "servesim/runner/config.h"
#include "servesim/runner/profile.h"
#include "servesim/runner/scale_bench.h"

namespace servesim::runner {

// Writes <out_dir>/heatmap.json. An empty grid uses config.profile.rps_grid.
ProfileResult cmd_profile_heatmap(const ClusterConfig& config,
                                  const std::vector<double>& rps_grid,
                                  uint64_t seed,
                                  const std::filesystem::path& out_dir);

struct RunOptions {
  std::optional<std::filesystem::path> trace;
  std::optional<std::filesystem::path> workload;
  std::optional<std::filesystem::path> heatmap;
  std::optional<Policy> policy;
  std::optional<uint64_t> seed;
};

// Trace first, then a workload spec file, then the config workload.
std::vector<workload::Request> resolve_requests(const ClusterConfig& config,
                                                const RunOptions& options);
// Heatmap for a policy: explicit file, the config file, or a fresh profile
// of the config (also written to out_dir when given).
dsched::Heatmap resolve_heatmap(const ClusterConfig& config,
                                const RunOptions& options, Policy policy,
                                const std::optional<std::filesystem::path>&
                                    out_dir = std::nullopt);

// Writes requests.csv, summary.json and run_info.json under out_dir.
RunResult cmd_run(const ClusterConfig& config, const RunOptions& options,
                  const std::filesystem::path& out_dir);

// Writes scaling.csv and scaling.json under out_dir.
std::vector<ScaleBenchRow> cmd_scale_bench(const ClusterConfig& config,
                                           const std::string& model,
                                           std::optional<std::string> path,
                                           std::optional<int32_t> n,
                                           const std::filesystem::path& out_dir);

}  // namespace servesim::runner
