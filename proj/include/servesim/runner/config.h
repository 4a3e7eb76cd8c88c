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
#include <string_view>
#include <vector>

#include <json.hpp>

#include "servesim/autoscaler/autoscaler.h"
#include "servesim/distflow/fabric.h"
#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/predictor.h"
#include "servesim/engine/engine.h"
#include "servesim/workload/trace.h"

namespace servesim::runner {

enum class Policy : int32_t {
  kRoundRobin,
  kLoadOnly,
  kLocalityOnly,
  kPdOnly,
  kCombined,
};

// Canonical names: rr, load, locality, pd, combined.
std::string_view policy_name(Policy policy);
// Also accepts RR, LoadOnly, LocalityOnly, PDOnly, Combined.
Policy policy_from_name(std::string_view name);
bool policy_uses_heatmap(Policy policy);

struct SloTargets {
  Micros ttft = 5 * kMicrosPerSecond;
  Micros tpot = 200'000;
};

struct ProfileSpec {
  std::vector<double> rps_grid = {0.25, 0.5, 1.0};
  int64_t requests_per_cell = 24;
  // Worker threads for independent cell simulations; 0 picks the core count.
  int32_t workers = 0;
};

struct AutoscaleSpec {
  bool enabled = false;
  autoscaler::PolicyConfig policy;
  Micros interval = 10 * kMicrosPerSecond;
  int32_t max_extra_tes = 4;
  int64_t prewarmed_pods = 0;
};

struct ScaleBenchSpec {
  std::vector<int32_t> fork_counts = {1, 2, 4, 8, 16, 32};
  // Targets come from pre-warmed TEs, so totals isolate the load step.
  bool prewarmed = false;
  bool scale_up_across_hosts = true;
};

struct ClusterConfig {
  std::vector<autoscaler::HostSpec> hosts = {{}, {}};
  bool scale_up_across_hosts = false;
  distflow::LinkTable links;

  int32_t colocated_tes = 2;
  int32_t disagg_pairs = 1;
  engine::EngineConfig colocated;
  engine::EngineConfig prefill;
  engine::EngineConfig decode;

  Policy policy = Policy::kCombined;
  double balance_epsilon = 0.2;
  dsched::DecodePredictor predictor;
  dsched::HeatmapAxes heatmap_axes;
  std::optional<std::filesystem::path> heatmap_path;
  SloTargets slo;
  ProfileSpec profile;
  std::optional<workload::WorkloadSpec> workload;

  autoscaler::ModelSpec model{"llama-34b", 68'000'000'000, 4};
  autoscaler::ScalingConstants scaling;
  AutoscaleSpec autoscale;
  ScaleBenchSpec scale_bench;

  uint64_t seed = 0;

  ClusterConfig();
};

// Throws Error(kConfigError).
void validate(const ClusterConfig& config);
// Relative paths inside the file resolve against base_dir.
ClusterConfig cluster_config_from_json(
    const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ClusterConfig load_cluster_config(const std::filesystem::path& path);
nlohmann::json cluster_config_to_json(const ClusterConfig& config);

// A JSON file path, or one of the presets llama3-8b, llama-34b, llama-70b.
autoscaler::ModelSpec resolve_model(const std::string& spec);

}  // namespace servesim::runner
