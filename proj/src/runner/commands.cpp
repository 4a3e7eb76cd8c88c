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

#include "servesim/runner/commands.h"

#include <fstream>

#include "servesim/common/error.h"
#include "servesim/workload/trace.h"

namespace servesim::runner {

namespace {

std::ofstream open_out(const std::filesystem::path& dir, const char* name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  SERVESIM_CHECK(out.good(), ErrorCode::kInvalidArgument,
                 "cannot write " + (dir / name).string());
  return out;
}

void write_json(const std::filesystem::path& dir, const char* name,
                const nlohmann::json& j) {
  auto out = open_out(dir, name);
  out << j.dump(2) << '\n';
}

}  // namespace

ProfileResult cmd_profile_heatmap(const ClusterConfig& config,
                                  const std::vector<double>& rps_grid,
                                  uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  SERVESIM_CHECK(config.colocated_tes >= 1 && config.disagg_pairs >= 1,
                 ErrorCode::kConfigError,
                 "profiling needs a colocated TE and a disaggregated pair");
  const auto& grid = rps_grid.empty() ? config.profile.rps_grid : rps_grid;
  auto result = profile_heatmap(config, grid, seed);
  write_json(out_dir, "heatmap.json", profile_to_json(result));
  return result;
}

std::vector<workload::Request> resolve_requests(const ClusterConfig& config,
                                                const RunOptions& options) {
  if (options.trace) {
    return workload::load_trace(*options.trace);
  }
  std::optional<workload::WorkloadSpec> spec = config.workload;
  if (options.workload) {
    std::ifstream in(*options.workload);
    SERVESIM_CHECK(in.good(), ErrorCode::kConfigError,
                   "cannot open workload " + options.workload->string());
    try {
      spec = workload::workload_spec_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfigError,
                  options.workload->string() + ": " + e.what());
    }
  }
  SERVESIM_CHECK(spec.has_value(), ErrorCode::kConfigError,
                 "no trace, workload file, or config workload given");
  if (options.seed) {
    spec->seed = *options.seed;
  }
  return workload::generate_trace(*spec);
}

dsched::Heatmap resolve_heatmap(
    const ClusterConfig& config, const RunOptions& options, Policy policy,
    const std::optional<std::filesystem::path>& out_dir) {
  if (!policy_uses_heatmap(policy)) {
    return dsched::Heatmap::zeros(config.heatmap_axes);
  }
  if (options.heatmap) {
    return dsched::load_heatmap_set(options.heatmap->string()).combined;
  }
  if (config.heatmap_path) {
    return dsched::load_heatmap_set(config.heatmap_path->string()).combined;
  }
  const uint64_t seed = options.seed.value_or(config.seed);
  if (out_dir) {
    return cmd_profile_heatmap(config, {}, seed, *out_dir).heatmaps.combined;
  }
  return profile_heatmap(config, config.profile.rps_grid, seed)
      .heatmaps.combined;
}

RunResult cmd_run(const ClusterConfig& config, const RunOptions& options,
                  const std::filesystem::path& out_dir) {
  const Policy policy = options.policy.value_or(config.policy);
  const auto requests = resolve_requests(config, options);
  const auto heatmap = resolve_heatmap(config, options, policy, out_dir);
  auto result = run_trace(config, requests, policy, heatmap);
  {
    auto out = open_out(out_dir, "requests.csv");
    result.metrics.write_csv(out);
  }
  write_json(out_dir, "summary.json", result.summary);
  write_json(out_dir, "run_info.json",
             {{"policy", policy_name(policy)},
              {"requests", result.arrived},
              {"conserved", result.conserved},
              {"event_digest", result.event_digest},
              {"tes", result.te_stats},
              {"scale_events", result.scale_events}});
  return result;
}

std::vector<ScaleBenchRow> cmd_scale_bench(const ClusterConfig& config,
                                           const std::string& model,
                                           std::optional<std::string> path,
                                           std::optional<int32_t> n,
                                           const std::filesystem::path& out_dir) {
  const auto spec = resolve_model(model);
  auto rows = run_scale_bench(config, spec, path, n);
  {
    auto out = open_out(out_dir, "scaling.csv");
    write_scale_csv(rows, out);
  }
  auto timelines = nlohmann::json::array();
  for (const auto& r : rows) {
    auto t = autoscaler::timeline_to_json(r.timeline);
    t["scenario"] = r.scenario;
    t["n"] = r.n;
    timelines.push_back(std::move(t));
  }
  write_json(out_dir, "scaling.json", timelines);
  return rows;
}

}  // namespace servesim::runner
