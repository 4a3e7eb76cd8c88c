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

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "servesim/common/error.h"
#include "servesim/runner/commands.h"

namespace {

using namespace servesim;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      SERVESIM_CHECK(used == item.size(), ErrorCode::kConfigError,
                     "bad RPS value '" + item + "'");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kConfigError, "bad RPS value '" + item + "'");
    }
  }
  return out;
}

runner::ClusterConfig load_config(const std::optional<std::string>& path) {
  return path ? runner::load_cluster_config(*path) : runner::ClusterConfig{};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"servesim: serving cluster simulator"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::optional<uint64_t> seed;
  std::string out_dir = ".";

  auto* profile = app.add_subcommand(
      "profile-heatmap", "Profile colocated vs disaggregated JCT per cell");
  std::string rps_grid;
  profile->add_option("--config", config, "Cluster config JSON")->required();
  profile->add_option("--seed", seed, "Seed");
  profile->add_option("--out-dir", out_dir, "Output directory");
  profile->add_option("--rps-grid", rps_grid, "Comma separated RPS values");

  auto* run = app.add_subcommand("run", "Simulate a trace on the cluster");
  runner::RunOptions opts;
  std::optional<std::string> policy;
  std::optional<std::string> trace;
  std::optional<std::string> workload;
  std::optional<std::string> heatmap;
  run->add_option("--config", config, "Cluster config JSON")->required();
  run->add_option("--seed", seed, "Seed");
  run->add_option("--out-dir", out_dir, "Output directory");
  run->add_option("--policy", policy, "rr | load | locality | pd | combined");
  run->add_option("--trace", trace, "JSONL trace");
  run->add_option("--workload", workload, "Workload spec JSON");
  run->add_option("--heatmap", heatmap, "Heatmap JSON from profile-heatmap");

  auto* bench =
      app.add_subcommand("scale-bench", "Time the scale-up pipeline per path");
  std::string model;
  std::optional<std::string> path;
  std::optional<int32_t> n;
  bench->add_option("--config", config, "Cluster config JSON");
  bench->add_option("--seed", seed, "Seed");
  bench->add_option("--out-dir", out_dir, "Output directory");
  bench->add_option("--model", model, "Model preset or model JSON")
      ->required();
  bench->add_option("--path", path,
                    "auto | dram-hit | dram-miss | fork-hccs | fork-roce");
  bench->add_option("--n", n, "TEs to scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (profile->parsed()) {
      auto cfg = load_config(config);
      const auto result = runner::cmd_profile_heatmap(
          cfg, rps_grid.empty() ? std::vector<double>{} : parse_grid(rps_grid),
          seed.value_or(cfg.seed), out_dir);
      std::cout << "heatmap: " << out_dir << "/heatmap.json sign_stability="
                << result.sign_stability << '\n';
    } else if (run->parsed()) {
      auto cfg = load_config(config);
      if (policy) {
        opts.policy = runner::policy_from_name(*policy);
      }
      if (trace) {
        opts.trace = *trace;
      }
      if (workload) {
        opts.workload = *workload;
      }
      if (heatmap) {
        opts.heatmap = *heatmap;
      }
      opts.seed = seed;
      const auto result = runner::cmd_run(cfg, opts, out_dir);
      const auto& s = result.summary;
      std::cout << "requests=" << s["requests"] << " completed="
                << s["completed"] << " mean_jct_us=" << s["jct_us"]["mean"]
                << " conserved=" << (result.conserved ? "yes" : "no") << '\n';
      if (!result.conserved) {
        return kExitRuntime;
      }
    } else if (bench->parsed()) {
      auto cfg = load_config(config);
      const auto rows = runner::cmd_scale_bench(cfg, model, path, n, out_dir);
      std::cout << "scaling: " << out_dir << "/scaling.csv rows=" << rows.size()
                << '\n';
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool config_error = e.code() == ErrorCode::kConfigError ||
                              e.code() == ErrorCode::kInvalidSpec;
    return config_error ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
