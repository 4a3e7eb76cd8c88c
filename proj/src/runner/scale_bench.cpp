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

#include "servesim/runner/scale_bench.h"

#include <algorithm>
#include <ostream>

#include "servesim/common/error.h"

namespace servesim::runner {

using autoscaler::LoadPath;

std::vector<autoscaler::ScalingTimeline> run_scale_scenario(
    const ClusterConfig& config, const autoscaler::ModelSpec& model,
    std::optional<LoadPath> path, int32_t n) {
  SERVESIM_CHECK(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  autoscaler::validate(model);
  const auto host = config.hosts.front();
  SERVESIM_CHECK(host.npus >= model.tp_degree, ErrorCode::kConfigError,
                 "a host cannot hold one TE of " + model.name);
  const bool fork = path == LoadPath::kNpuForkHccs ||
                    path == LoadPath::kNpuForkRoce;
  const int32_t per_host = host.npus / model.tp_degree;
  // The source gets a host of its own so targets are placed by link kind.
  const int32_t hosts = (n + per_host - 1) / per_host + (fork ? 1 : 0);

  autoscaler::ScalerClusterSpec spec;
  spec.hosts.assign(static_cast<size_t>(std::max(hosts, 1)), host);
  spec.scale_up_across_hosts = path == LoadPath::kNpuForkRoce
                                   ? false
                                   : config.scale_bench.scale_up_across_hosts;
  spec.links = config.links;

  sim::Simulator sim;
  autoscaler::Autoscaler scaler(sim, spec, config.scaling);
  const distflow::HostId first_target = fork ? 1 : 0;
  if (fork) {
    scaler.add_running_te(model, 0);
  }
  if (!path || path == LoadPath::kDramHit) {
    for (size_t h = 0; h < spec.hosts.size(); ++h) {
      scaler.preload(model, static_cast<distflow::HostId>(h));
    }
  }
  if (config.scale_bench.prewarmed) {
    scaler.provision_pods(n);
    for (int32_t i = 0; i < n; ++i) {
      scaler.prewarm_te(first_target + i / per_host, model.tp_degree);
    }
  }
  return scaler.scale_up_blocking(n, model, path);
}

std::vector<ScaleBenchRow> run_scale_bench(const ClusterConfig& config,
                                           const autoscaler::ModelSpec& model,
                                           std::optional<std::string> path,
                                           std::optional<int32_t> n) {
  std::vector<ScaleBenchRow> rows;
  if (path) {
    std::optional<LoadPath> p;
    if (*path != "auto") {
      try {
        p = autoscaler::load_path_from_name(*path);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfigError, e.what());
      }
    }
    const int32_t count = n.value_or(1);
    for (const auto& t : run_scale_scenario(config, model, p, count)) {
      rows.push_back({"single", count, t});
    }
    return rows;
  }
  for (LoadPath p : {LoadPath::kDramMiss, LoadPath::kDramHit,
                     LoadPath::kNpuForkRoce, LoadPath::kNpuForkHccs}) {
    rows.push_back({"te_load", 1, run_scale_scenario(config, model, p, 1)[0]});
  }
  std::vector<int32_t> counts = config.scale_bench.fork_counts;
  if (n) {
    counts = {*n};
  }
  for (int32_t k : counts) {
    const auto timelines =
        run_scale_scenario(config, model, LoadPath::kNpuForkHccs, k);
    const auto slowest = std::max_element(
        timelines.begin(), timelines.end(),
        [](const auto& a, const auto& b) { return a.total() < b.total(); });
    rows.push_back({"fork_scale", k, *slowest});
  }
  return rows;
}

void write_scale_csv(const std::vector<ScaleBenchRow>& rows, std::ostream& os) {
  os << "scenario,path,n,te,host,scaler_pre_us,te_pre_load_us,te_load_us,"
        "te_post_load_us,scaler_post_us,total_us\n";
  for (const auto& r : rows) {
    const auto& t = r.timeline;
    os << r.scenario << ',' << autoscaler::load_path_name(t.path) << ','
       << r.n << ',' << t.te << ',' << t.host << ',' << t.scaler_pre << ','
       << t.te_pre_load << ',' << t.te_load << ',' << t.te_post_load << ','
       << t.scaler_post << ',' << t.total() << '\n';
  }
}

}  // namespace servesim::runner
