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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "servesim/distflow/fabric.h"
#include "servesim/engine/engine.h"
#include "servesim/sim/simulator.h"

namespace servesim::autoscaler {

using distflow::HostId;

struct ModelSpec {
  std::string name;
  int64_t weight_bytes = 0;
  int32_t tp_degree = 1;

  // Every rank loads the same share.
  int64_t shard_bytes() const { return weight_bytes / tp_degree; }
};

void validate(const ModelSpec& model);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json model_spec_to_json(const ModelSpec& model);

enum class LoadPath : int32_t { kDramHit, kDramMiss, kNpuForkHccs, kNpuForkRoce };

std::string_view load_path_name(LoadPath path);
LoadPath load_path_from_name(std::string_view name);

struct ScalingConstants {
  double pod_create_s = 30.0;
  double te_startup_s = 40.0;
  bool optimized_startup = false;
  double optimized_startup_factor = 0.65;
  double ssd_bandwidth = 3e9;  // bytes per second
  double tensor_init_s = 0.3;
  double push_latency_s = 0.05;
  double profile_lookup_s = 0.01;
  double block_alloc_s = 0.02;
  int64_t dummy_prompt_tokens = 128;
  // Prices the dummy request; coefficients at cost_ref_tp.
  engine::CostModel dummy_cost;
  int32_t cost_ref_tp = 4;
  // Wall time multiplier on a fork source while it broadcasts.
  double fork_interference = 1.0;
};

void validate(const ScalingConstants& constants);
ScalingConstants scaling_constants_from_json(const nlohmann::json& j);
nlohmann::json scaling_constants_to_json(const ScalingConstants& c);

struct ScalingTimeline {
  TeId te = -1;
  HostId host = -1;
  LoadPath path = LoadPath::kDramMiss;
  Micros started_at = 0;
  Micros scaler_pre = 0;
  Micros te_pre_load = 0;
  Micros te_load = 0;
  Micros te_post_load = 0;
  Micros scaler_post = 0;

  Micros total() const {
    return scaler_pre + te_pre_load + te_load + te_post_load + scaler_post;
  }
  Micros ready_at() const { return started_at + total(); }
};

nlohmann::json timeline_to_json(const ScalingTimeline& t);

// Scale decisions ------------------------------------------------------------

struct MetricsWindow {
  Micros at = 0;
  int64_t requests = 0;
  int64_t slo_violations = 0;
  double mean_queued_tokens_per_te = 0.0;

  double violation_rate() const;
};

enum class ScaleAction : int32_t { kHold, kUp, kDown };

struct ScaleDecision {
  ScaleAction action = ScaleAction::kHold;
  int32_t count = 0;
};

struct PolicyConfig {
  double violation_up = 0.1;
  double violation_down = 0.02;
  double queue_up = 8192.0;   // mean queued tokens per TE
  double queue_down = 1024.0;
  int32_t step = 1;
  Micros cooldown = 60 * kMicrosPerSecond;
};

void validate(const PolicyConfig& policy);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

// Threshold policy with hysteresis: distinct up/down thresholds, and no Down
// within cooldown of the previous action.
class ScalePolicy {
 public:
  explicit ScalePolicy(PolicyConfig config = {});
  // Throws Error(kInvalidArgument) on an empty window.
  ScaleDecision evaluate(const MetricsWindow& window);

 private:
  PolicyConfig config_;
  std::optional<Micros> last_action_;
};

// Recency weighted demand per model; the top entries are preload candidates.
class PreloadPredictor {
 public:
  explicit PreloadPredictor(double half_life_s = 600.0)
      : half_life_s_(half_life_s) {}
  void record_demand(const std::string& model, Micros at, double weight = 1.0);
  std::vector<std::string> top(Micros now, size_t k) const;
  double score(const std::string& model, Micros now) const;

 private:
  struct Entry {
    double score = 0.0;
    Micros at = 0;
  };
  double decayed(const Entry& e, Micros now) const;
  double half_life_s_;
  std::map<std::string, Entry> entries_;
};

// Cluster manager ------------------------------------------------------------

struct HostSpec {
  int32_t npus = 8;
  double dram_bytes = 1.5e12;
};

struct ScalerClusterSpec {
  std::vector<HostSpec> hosts;
  // Scale-up (HCCS) links span hosts, as in a SuperPod.
  bool scale_up_across_hosts = false;
  distflow::LinkTable links;
};

struct PoolCounters {
  int64_t pods_provisioned = 0;
  int64_t pods_replenished = 0;
  int64_t pods_consumed = 0;
  int64_t tes_provisioned = 0;
  int64_t tes_returned = 0;
  int64_t tes_consumed = 0;
};

class Autoscaler {
 public:
  using TimelinesCallback =
      std::function<void(const std::vector<ScalingTimeline>&)>;
  using ForkCallback = std::function<void(Micros duration)>;
  struct Hooks {
    std::function<void(const ScalingTimeline&)> on_te_ready;
    // A running TE started or stopped serving as a fork source.
    std::function<void(TeId source, double interference)> on_fork_source;
  };

  Autoscaler(sim::Simulator& sim, const ScalerClusterSpec& cluster,
             ScalingConstants constants = {});
  Autoscaler(const Autoscaler&) = delete;
  Autoscaler& operator=(const Autoscaler&) = delete;

  void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }
  const ScalingConstants& constants() const { return constants_; }
  distflow::Fabric& fabric() { return *fabric_; }
  size_t hosts() const { return hosts_.size(); }
  int32_t free_npus(HostId host) const;

  static distflow::EndpointId npu_endpoint(HostId host, int32_t npu);
  static distflow::EndpointId dram_endpoint(HostId host);

  // Pools.
  void provision_pods(int64_t n);
  void replenish_pods(int64_t n);
  int64_t prewarmed_pods() const { return pods_; }
  // Throws Error(kNoPod), Error(kInsufficientResources).
  TeId prewarm_te(HostId host, int32_t spmd_ranks);
  size_t prewarmed_tes() const { return prewarmed_.size(); }
  // Binds a pool TE to the model; nullopt when none fits.
  std::optional<TeId> bind_prewarmed(const ModelSpec& model);
  // Returns a running or bound TE to the pool, model-agnostic again.
  void release_te(TeId te);
  const PoolCounters& counters() const { return counters_; }

  // Throws Error(kDramFull). Idempotent per (model, host).
  void preload(const ModelSpec& model, HostId host);
  bool preloaded(const std::string& model, HostId host) const;
  double preloaded_bytes(HostId host) const;

  // Registers an already serving TE, e.g. the initial deployment.
  TeId add_running_te(const ModelSpec& model, HostId host);
  std::vector<TeId> running_tes(const std::string& model) const;
  std::optional<std::string> bound_model(TeId te) const;

  LoadPath choose_load_path(const ModelSpec& model, HostId target_host) const;

  // Five step pipeline per new TE; events interleave across TEs. A forced
  // path skips availability checks except the fork source. Throws
  // Error(kInsufficientResources) before any state changes, Error(kNoSource).
  void scale_up(int32_t n, const ModelSpec& model,
                std::optional<LoadPath> forced_path, TimelinesCallback on_done);
  // Runs the simulator until the scale-up completes.
  std::vector<ScalingTimeline> scale_up_blocking(
      int32_t n, const ModelSpec& model,
      std::optional<LoadPath> forced_path = std::nullopt);

  // Per-rank broadcast of the model shard from a Ready source to target TEs
  // (placed, not yet serving). Throws Error(kNoSource).
  void fork_broadcast(const ModelSpec& model, TeId source,
                      const std::vector<TeId>& targets, ForkCallback on_done);

 private:
  struct Host {
    HostSpec spec;
    std::vector<bool> npu_used;
    std::map<std::string, int64_t> preloads;
  };
  struct TeSlot {
    TeId id = -1;
    HostId host = -1;
    std::vector<int32_t> npus;
    std::optional<std::string> model;
    bool ready = false;
    bool pooled = false;
  };
  struct Placement {
    HostId host = -1;
    std::optional<TeId> prewarmed;
    bool pod_from_pool = false;
    LoadPath path = LoadPath::kDramMiss;
    std::optional<TeId> source;
  };
  struct PendingScale;

  std::vector<int32_t> take_npus(HostId host, int32_t n);
  TeId new_slot(HostId host, std::vector<int32_t> npus);
  std::optional<TeId> fork_source(const ModelSpec& model, HostId host,
                                  distflow::LinkKind kind) const;
  distflow::LinkKind link_between_hosts(HostId a, HostId b) const;
  Micros dummy_request_time(const ModelSpec& model) const;
  void start_local_load(const std::shared_ptr<PendingScale>& scale, size_t i);
  void maybe_start_forks(const std::shared_ptr<PendingScale>& scale);
  void on_loaded(const std::shared_ptr<PendingScale>& scale, size_t i);

  sim::Simulator& sim_;
  ScalingConstants constants_;
  ScalerClusterSpec cluster_;
  std::unique_ptr<distflow::Fabric> fabric_;
  distflow::ChannelGroup group_;
  std::vector<Host> hosts_;
  std::map<TeId, TeSlot> slots_;
  std::vector<TeId> prewarmed_;
  int64_t pods_ = 0;
  TeId next_te_ = 0;
  PoolCounters counters_;
  Hooks hooks_;
};

}  // namespace servesim::autoscaler
