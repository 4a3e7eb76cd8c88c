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
#include <map>
#include <memory>
#include <vector>

#include <json.hpp>

#include "servesim/autoscaler/autoscaler.h"
#include "servesim/distflow/fabric.h"
#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/policy.h"
#include "servesim/dsched/prompt_tree.h"
#include "servesim/engine/engine.h"
#include "servesim/runner/config.h"
#include "servesim/sim/simulator.h"
#include "servesim/workload/request.h"

namespace servesim::runner {

// One TE group serving one model: colocated TEs and prefill/decode pairs
// behind a job executor that routes with the configured policy. Optionally
// grows colocated TEs through the autoscaler.
class Cluster {
 public:
  // heatmap is only consulted by heatmap-driven policies.
  Cluster(const ClusterConfig& config, sim::Simulator& sim, Policy policy,
          dsched::Heatmap heatmap);
  ~Cluster();
  Cluster(const Cluster&) = delete;
  Cluster& operator=(const Cluster&) = delete;

  // Schedules one arrival per request. Requests must outlive the run.
  void schedule_trace(const std::vector<workload::Request>& requests);
  // Routes a request now.
  void submit(const workload::Request& request);

  // Live snapshot of the routable members.
  std::vector<dsched::GroupMember> members() const;
  engine::TaskExecutor& te(TeId id) { return *tes_.at(id); }
  size_t te_count() const { return tes_.size(); }
  const dsched::GlobalPromptTree& colocated_tree() const {
    return colocated_tree_;
  }
  const dsched::GlobalPromptTree& prefill_tree() const { return prefill_tree_; }
  const std::map<std::string, workload::Job>& jobs() const { return jobs_; }
  int64_t arrived() const { return arrived_; }
  int64_t resolved() const { return resolved_; }
  // Routing decisions per member id.
  const std::map<TeId, int64_t>& routed() const { return routed_; }
  const std::vector<nlohmann::json>& scale_events() const {
    return scale_events_;
  }
  nlohmann::json te_stats() const;

 private:
  struct Pair {
    TeId prefill = -1;
    TeId decode = -1;
  };

  TeId add_te(const engine::EngineConfig& config, distflow::HostId host,
              int32_t npu);
  void wire_colocated(TeId id);
  void wire_pair(const Pair& pair);
  dsched::GroupMember choose(const workload::Request& request);
  void on_resolved();
  void autoscale_tick();

  const ClusterConfig& config_;
  sim::Simulator& sim_;
  Policy policy_;
  dsched::Heatmap heatmap_;

  std::unique_ptr<distflow::Fabric> fabric_;
  distflow::ChannelGroup group_;
  std::map<TeId, std::unique_ptr<engine::TaskExecutor>> tes_;
  std::vector<TeId> colocated_;
  std::vector<Pair> pairs_;
  dsched::GlobalPromptTree colocated_tree_;
  dsched::GlobalPromptTree prefill_tree_;
  dsched::PrefixMatcher matcher_;
  size_t rr_next_ = 0;
  TeId next_te_ = 0;

  std::map<std::string, workload::Job> jobs_;
  std::map<TeId, int64_t> routed_;
  int64_t arrived_ = 0;
  int64_t resolved_ = 0;
  int64_t expected_ = 0;

  // Autoscaling state.
  std::unique_ptr<autoscaler::Autoscaler> scaler_;
  std::unique_ptr<autoscaler::ScalePolicy> scale_policy_;
  std::vector<TeId> scaled_;  // cluster ids of autoscaled TEs
  std::map<TeId, TeId> scaler_ids_;  // cluster id -> autoscaler id
  int32_t scaling_in_flight_ = 0;
  size_t window_start_ = 0;
  std::vector<nlohmann::json> scale_events_;
};

struct RunResult {
  sim::MetricsStore metrics;
  nlohmann::json summary;
  nlohmann::json te_stats;
  std::vector<nlohmann::json> scale_events;
  int64_t arrived = 0;
  bool conserved = false;
  uint64_t event_digest = 0;
};

// Summary over per-request records; every field can be recomputed from the
// per-request CSV.
nlohmann::json summarize_metrics(const sim::MetricsStore& metrics,
                                 const SloTargets& slo);

// Simulates the whole trace until the event queue drains.
RunResult run_trace(const ClusterConfig& config,
                    const std::vector<workload::Request>& requests,
                    Policy policy, const dsched::Heatmap& heatmap);

}  // namespace servesim::runner
