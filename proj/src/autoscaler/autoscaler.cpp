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

#include "servesim/autoscaler/autoscaler.h"

#include <algorithm>
#include <cmath>

#include "servesim/common/error.h"

namespace servesim::autoscaler {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

constexpr distflow::EndpointId kHostStride = 1024;

bool is_fork(LoadPath p) {
  return p == LoadPath::kNpuForkHccs || p == LoadPath::kNpuForkRoce;
}

distflow::LinkKind fork_link(LoadPath p) {
  return p == LoadPath::kNpuForkHccs ? distflow::LinkKind::kHccs
                                     : distflow::LinkKind::kRoce;
}

}  // namespace

void validate(const ModelSpec& model) {
  SERVESIM_CHECK(model.weight_bytes > 0, ErrorCode::kConfigError,
                 "model weight_bytes must be positive");
  SERVESIM_CHECK(model.tp_degree >= 1, ErrorCode::kConfigError,
                 "model tp_degree must be >= 1");
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec m;
  try {
    m.name = j.at("name").get<std::string>();
    if (j.contains("weight_bytes")) {
      m.weight_bytes = j.at("weight_bytes").get<int64_t>();
    } else {
      // Parameter count times bytes per parameter.
      m.weight_bytes = std::llround(j.at("params").get<double>() *
                                    j.value("bytes_per_param", 2.0));
    }
    read(j, "tp_degree", m.tp_degree);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("model: ") + e.what());
  }
  validate(m);
  return m;
}

nlohmann::json model_spec_to_json(const ModelSpec& m) {
  return {{"name", m.name},
          {"weight_bytes", m.weight_bytes},
          {"tp_degree", m.tp_degree}};
}

std::string_view load_path_name(LoadPath path) {
  switch (path) {
    case LoadPath::kDramHit:
      return "dram-hit";
    case LoadPath::kDramMiss:
      return "dram-miss";
    case LoadPath::kNpuForkHccs:
      return "fork-hccs";
    case LoadPath::kNpuForkRoce:
      return "fork-roce";
  }
  return "unknown";
}

LoadPath load_path_from_name(std::string_view name) {
  for (LoadPath p : {LoadPath::kDramHit, LoadPath::kDramMiss,
                     LoadPath::kNpuForkHccs, LoadPath::kNpuForkRoce}) {
    if (load_path_name(p) == name) {
      return p;
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown load path '" + std::string(name) + "'");
}

void validate(const ScalingConstants& c) {
  SERVESIM_CHECK(c.pod_create_s >= 0 && c.te_startup_s >= 0 &&
                     c.tensor_init_s >= 0 && c.push_latency_s >= 0 &&
                     c.profile_lookup_s >= 0 && c.block_alloc_s >= 0,
                 ErrorCode::kConfigError, "scaling times must be >= 0");
  SERVESIM_CHECK(c.ssd_bandwidth > 0, ErrorCode::kConfigError,
                 "ssd_bandwidth must be positive");
  SERVESIM_CHECK(c.optimized_startup_factor > 0 &&
                     c.optimized_startup_factor <= 1,
                 ErrorCode::kConfigError,
                 "optimized_startup_factor must be in (0, 1]");
  SERVESIM_CHECK(c.fork_interference >= 1.0, ErrorCode::kConfigError,
                 "fork_interference must be >= 1");
  SERVESIM_CHECK(c.cost_ref_tp >= 1 && c.dummy_prompt_tokens >= 0,
                 ErrorCode::kConfigError, "invalid dummy request settings");
}

ScalingConstants scaling_constants_from_json(const nlohmann::json& j) {
  ScalingConstants c;
  try {
    read(j, "pod_create_s", c.pod_create_s);
    read(j, "te_startup_s", c.te_startup_s);
    read(j, "optimized_startup", c.optimized_startup);
    read(j, "optimized_startup_factor", c.optimized_startup_factor);
    read(j, "ssd_bandwidth_bytes_per_s", c.ssd_bandwidth);
    read(j, "tensor_init_s", c.tensor_init_s);
    read(j, "push_latency_s", c.push_latency_s);
    read(j, "profile_lookup_s", c.profile_lookup_s);
    read(j, "block_alloc_s", c.block_alloc_s);
    read(j, "dummy_prompt_tokens", c.dummy_prompt_tokens);
    read(j, "cost_ref_tp", c.cost_ref_tp);
    read(j, "fork_interference", c.fork_interference);
    if (j.contains("dummy_cost")) {
      const auto& k = j.at("dummy_cost");
      read(k, "a_p", c.dummy_cost.a_p);
      read(k, "b_p", c.dummy_cost.b_p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("scaling: ") + e.what());
  }
  validate(c);
  return c;
}

nlohmann::json scaling_constants_to_json(const ScalingConstants& c) {
  return {{"pod_create_s", c.pod_create_s},
          {"te_startup_s", c.te_startup_s},
          {"optimized_startup", c.optimized_startup},
          {"optimized_startup_factor", c.optimized_startup_factor},
          {"ssd_bandwidth_bytes_per_s", c.ssd_bandwidth},
          {"tensor_init_s", c.tensor_init_s},
          {"push_latency_s", c.push_latency_s},
          {"profile_lookup_s", c.profile_lookup_s},
          {"block_alloc_s", c.block_alloc_s},
          {"dummy_prompt_tokens", c.dummy_prompt_tokens},
          {"cost_ref_tp", c.cost_ref_tp},
          {"fork_interference", c.fork_interference}};
}

nlohmann::json timeline_to_json(const ScalingTimeline& t) {
  return {{"te", t.te},
          {"host", t.host},
          {"load_path", load_path_name(t.path)},
          {"started_at_us", t.started_at},
          {"scaler_pre_us", t.scaler_pre},
          {"te_pre_load_us", t.te_pre_load},
          {"te_load_us", t.te_load},
          {"te_post_load_us", t.te_post_load},
          {"scaler_post_us", t.scaler_post},
          {"total_us", t.total()}};
}

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

double MetricsWindow::violation_rate() const {
  return requests > 0 ? static_cast<double>(slo_violations) /
                            static_cast<double>(requests)
                      : 0.0;
}

void validate(const PolicyConfig& p) {
  SERVESIM_CHECK(p.violation_down <= p.violation_up &&
                     p.queue_down <= p.queue_up,
                 ErrorCode::kConfigError,
                 "down thresholds must not exceed up thresholds");
  SERVESIM_CHECK(p.step >= 1 && p.cooldown >= 0, ErrorCode::kConfigError,
                 "invalid scaling step or cooldown");
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig p;
  try {
    read(j, "violation_up", p.violation_up);
    read(j, "violation_down", p.violation_down);
    read(j, "queue_up_tokens", p.queue_up);
    read(j, "queue_down_tokens", p.queue_down);
    read(j, "step", p.step);
    if (j.contains("cooldown_s")) {
      p.cooldown = seconds_to_micros(j.at("cooldown_s").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError,
                std::string("autoscaler: ") + e.what());
  }
  validate(p);
  return p;
}

ScalePolicy::ScalePolicy(PolicyConfig config) : config_(config) {
  validate(config_);
}

ScaleDecision ScalePolicy::evaluate(const MetricsWindow& w) {
  SERVESIM_CHECK(w.requests > 0, ErrorCode::kInvalidArgument,
                 "empty metrics window");
  const double rate = w.violation_rate();
  if (rate > config_.violation_up ||
      w.mean_queued_tokens_per_te > config_.queue_up) {
    last_action_ = w.at;
    return {ScaleAction::kUp, config_.step};
  }
  const bool cooled =
      !last_action_ || w.at - *last_action_ >= config_.cooldown;
  if (rate < config_.violation_down &&
      w.mean_queued_tokens_per_te < config_.queue_down && cooled) {
    last_action_ = w.at;
    return {ScaleAction::kDown, config_.step};
  }
  return {};
}

double PreloadPredictor::decayed(const Entry& e, Micros now) const {
  const double dt = micros_to_seconds(std::max<Micros>(0, now - e.at));
  return e.score * std::exp2(-dt / half_life_s_);
}

void PreloadPredictor::record_demand(const std::string& model, Micros at,
                                     double weight) {
  auto& e = entries_[model];
  e.score = decayed(e, at) + weight;
  e.at = at;
}

double PreloadPredictor::score(const std::string& model, Micros now) const {
  auto it = entries_.find(model);
  return it == entries_.end() ? 0.0 : decayed(it->second, now);
}

std::vector<std::string> PreloadPredictor::top(Micros now, size_t k) const {
  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& [name, e] : entries_) {
    ranked.emplace_back(decayed(e, now), name);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> out;
  for (size_t i = 0; i < ranked.size() && i < k; ++i) {
    out.push_back(ranked[i].second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Autoscaler
// ---------------------------------------------------------------------------

struct Autoscaler::PendingScale {
  ModelSpec model;
  std::vector<Placement> placements;
  std::vector<ScalingTimeline> timelines;
  std::vector<std::optional<Micros>> pre_load_done;
  size_t remaining = 0;
  bool forks_started = false;
  TimelinesCallback on_done;
};

distflow::EndpointId Autoscaler::npu_endpoint(HostId host, int32_t npu) {
  return host * kHostStride + npu;
}

distflow::EndpointId Autoscaler::dram_endpoint(HostId host) {
  return host * kHostStride + (kHostStride - 1);
}

Autoscaler::Autoscaler(sim::Simulator& sim, const ScalerClusterSpec& cluster,
                       ScalingConstants constants)
    : sim_(sim), constants_(constants), cluster_(cluster) {
  validate(constants_);
  SERVESIM_CHECK(!cluster_.hosts.empty(), ErrorCode::kConfigError,
                 "autoscaler needs at least one host");
  distflow::Topology topo;
  topo.set_scale_up_across_hosts(cluster_.scale_up_across_hosts);
  std::vector<distflow::EndpointId> all;
  for (size_t h = 0; h < cluster_.hosts.size(); ++h) {
    const auto& spec = cluster_.hosts[h];
    SERVESIM_CHECK(spec.npus >= 1 && spec.npus < kHostStride - 1 &&
                       spec.dram_bytes >= 0,
                   ErrorCode::kConfigError, "invalid host spec");
    const auto host = static_cast<HostId>(h);
    topo.add_endpoint(dram_endpoint(host), host,
                      distflow::EndpointKind::kDram);
    all.push_back(dram_endpoint(host));
    for (int32_t n = 0; n < spec.npus; ++n) {
      topo.add_endpoint(npu_endpoint(host, n), host,
                        distflow::EndpointKind::kNpu);
      all.push_back(npu_endpoint(host, n));
    }
    hosts_.push_back(Host{spec, std::vector<bool>(spec.npus, false), {}});
  }
  fabric_ = std::make_unique<distflow::Fabric>(sim_, std::move(topo),
                                               cluster_.links);
  if (all.size() >= 2) {
    group_ = fabric_->link_cluster(all);
  }
}

int32_t Autoscaler::free_npus(HostId host) const {
  const auto& used = hosts_.at(host).npu_used;
  return static_cast<int32_t>(std::count(used.begin(), used.end(), false));
}

std::vector<int32_t> Autoscaler::take_npus(HostId host, int32_t n) {
  SERVESIM_CHECK(host >= 0 && host < static_cast<HostId>(hosts_.size()),
                 ErrorCode::kInvalidArgument,
                 "unknown host " + std::to_string(host));
  SERVESIM_CHECK(free_npus(host) >= n, ErrorCode::kInsufficientResources,
                 "host " + std::to_string(host) + " lacks " +
                     std::to_string(n) + " free NPUs");
  std::vector<int32_t> out;
  auto& used = hosts_[host].npu_used;
  for (int32_t i = 0; i < static_cast<int32_t>(used.size()) &&
                      static_cast<int32_t>(out.size()) < n;
       ++i) {
    if (!used[i]) {
      used[i] = true;
      out.push_back(i);
    }
  }
  return out;
}

TeId Autoscaler::new_slot(HostId host, std::vector<int32_t> npus) {
  TeSlot slot;
  slot.id = next_te_++;
  slot.host = host;
  slot.npus = std::move(npus);
  slots_.emplace(slot.id, slot);
  return slot.id;
}

void Autoscaler::provision_pods(int64_t n) {
  SERVESIM_CHECK(n >= 0, ErrorCode::kInvalidArgument, "n must be >= 0");
  pods_ += n;
  counters_.pods_provisioned += n;
}

void Autoscaler::replenish_pods(int64_t n) {
  SERVESIM_CHECK(n >= 0, ErrorCode::kInvalidArgument, "n must be >= 0");
  pods_ += n;
  counters_.pods_replenished += n;
}

TeId Autoscaler::prewarm_te(HostId host, int32_t spmd_ranks) {
  SERVESIM_CHECK(pods_ > 0, ErrorCode::kNoPod, "no pre-warmed pod left");
  auto npus = take_npus(host, spmd_ranks);
  --pods_;
  ++counters_.pods_consumed;
  const TeId id = new_slot(host, std::move(npus));
  slots_.at(id).pooled = true;
  prewarmed_.push_back(id);
  ++counters_.tes_provisioned;
  return id;
}

std::optional<TeId> Autoscaler::bind_prewarmed(const ModelSpec& model) {
  for (auto it = prewarmed_.begin(); it != prewarmed_.end(); ++it) {
    auto& slot = slots_.at(*it);
    if (static_cast<int32_t>(slot.npus.size()) == model.tp_degree) {
      const TeId id = *it;
      prewarmed_.erase(it);
      slot.pooled = false;
      slot.model = model.name;
      ++counters_.tes_consumed;
      return id;
    }
  }
  return std::nullopt;
}

void Autoscaler::release_te(TeId te) {
  auto it = slots_.find(te);
  SERVESIM_CHECK(it != slots_.end() && !it->second.pooled,
                 ErrorCode::kInvalidArgument,
                 "TE " + std::to_string(te) + " cannot be released");
  it->second.model.reset();
  it->second.ready = false;
  it->second.pooled = true;
  prewarmed_.push_back(te);
  ++counters_.tes_returned;
}

void Autoscaler::preload(const ModelSpec& model, HostId host) {
  SERVESIM_CHECK(host >= 0 && host < static_cast<HostId>(hosts_.size()),
                 ErrorCode::kInvalidArgument,
                 "unknown host " + std::to_string(host));
  auto& h = hosts_[host];
  if (h.preloads.count(model.name) > 0) {
    return;
  }
  SERVESIM_CHECK(preloaded_bytes(host) + static_cast<double>(model.weight_bytes) <=
                     h.spec.dram_bytes,
                 ErrorCode::kDramFull,
                 "host " + std::to_string(host) + " cannot hold " + model.name);
  h.preloads[model.name] = model.weight_bytes;
}

bool Autoscaler::preloaded(const std::string& model, HostId host) const {
  return hosts_.at(host).preloads.count(model) > 0;
}

double Autoscaler::preloaded_bytes(HostId host) const {
  double sum = 0.0;
  for (const auto& [name, bytes] : hosts_.at(host).preloads) {
    sum += static_cast<double>(bytes);
  }
  return sum;
}

TeId Autoscaler::add_running_te(const ModelSpec& model, HostId host) {
  validate(model);
  const TeId id = new_slot(host, take_npus(host, model.tp_degree));
  auto& slot = slots_.at(id);
  slot.model = model.name;
  slot.ready = true;
  return id;
}

std::vector<TeId> Autoscaler::running_tes(const std::string& model) const {
  std::vector<TeId> out;
  for (const auto& [id, slot] : slots_) {
    if (slot.ready && slot.model == model) {
      out.push_back(id);
    }
  }
  return out;
}

std::optional<std::string> Autoscaler::bound_model(TeId te) const {
  auto it = slots_.find(te);
  return it == slots_.end() ? std::nullopt : it->second.model;
}

distflow::LinkKind Autoscaler::link_between_hosts(HostId a, HostId b) const {
  return a == b || cluster_.scale_up_across_hosts ? distflow::LinkKind::kHccs
                                                   : distflow::LinkKind::kRoce;
}

std::optional<TeId> Autoscaler::fork_source(const ModelSpec& model,
                                            HostId host,
                                            distflow::LinkKind kind) const {
  for (const auto& [id, slot] : slots_) {
    if (slot.ready && slot.model == model.name &&
        static_cast<int32_t>(slot.npus.size()) == model.tp_degree &&
        link_between_hosts(slot.host, host) == kind) {
      return id;
    }
  }
  return std::nullopt;
}

LoadPath Autoscaler::choose_load_path(const ModelSpec& model,
                                      HostId target_host) const {
  if (fork_source(model, target_host, distflow::LinkKind::kHccs)) {
    return LoadPath::kNpuForkHccs;
  }
  if (fork_source(model, target_host, distflow::LinkKind::kRoce)) {
    return LoadPath::kNpuForkRoce;
  }
  if (preloaded(model.name, target_host)) {
    return LoadPath::kDramHit;
  }
  return LoadPath::kDramMiss;
}

Micros Autoscaler::dummy_request_time(const ModelSpec& model) const {
  const double a_p = constants_.dummy_cost.a_p *
                     static_cast<double>(constants_.cost_ref_tp) /
                     static_cast<double>(model.tp_degree);
  return ceil_micros(constants_.dummy_cost.b_p +
                     a_p * static_cast<double>(constants_.dummy_prompt_tokens));
}

void Autoscaler::scale_up(int32_t n, const ModelSpec& model,
                          std::optional<LoadPath> forced_path,
                          TimelinesCallback on_done) {
  SERVESIM_CHECK(n >= 1, ErrorCode::kInvalidArgument, "n must be >= 1");
  validate(model);

  // Plan every placement against a scratch copy so failures leave no trace.
  std::vector<int32_t> free(hosts_.size());
  for (size_t h = 0; h < hosts_.size(); ++h) {
    free[h] = free_npus(static_cast<HostId>(h));
  }
  std::vector<TeId> pool;
  for (TeId id : prewarmed_) {
    if (static_cast<int32_t>(slots_.at(id).npus.size()) == model.tp_degree) {
      pool.push_back(id);
    }
  }
  int64_t pods = pods_;
  auto scale = std::make_shared<PendingScale>();
  scale->model = model;
  for (int32_t i = 0; i < n; ++i) {
    Placement p;
    if (!pool.empty()) {
      p.prewarmed = pool.front();
      pool.erase(pool.begin());
      p.host = slots_.at(*p.prewarmed).host;
    } else {
      // Prefer hosts reachable over HCCS from a source, then preloaded ones.
      int best_rank = 4;
      for (size_t h = 0; h < hosts_.size(); ++h) {
        if (free[h] < model.tp_degree) {
          continue;
        }
        const auto host = static_cast<HostId>(h);
        int rank = 3;
        if (forced_path && is_fork(*forced_path)) {
          rank = fork_source(model, host, fork_link(*forced_path)) ? 0 : 3;
        } else if (forced_path == LoadPath::kDramHit) {
          rank = preloaded(model.name, host) ? 0 : 3;
        } else if (forced_path) {
          rank = 3;
        } else if (fork_source(model, host, distflow::LinkKind::kHccs)) {
          rank = 0;
        } else if (preloaded(model.name, host)) {
          rank = 1;
        }
        if (rank < best_rank) {
          best_rank = rank;
          p.host = host;
        }
      }
      SERVESIM_CHECK(p.host >= 0, ErrorCode::kInsufficientResources,
                     "no host has " + std::to_string(model.tp_degree) +
                         " free NPUs for TE " + std::to_string(i + 1) +
                         " of " + std::to_string(n));
      free[p.host] -= model.tp_degree;
      if (pods > 0) {
        --pods;
        p.pod_from_pool = true;
      }
    }
    p.path = forced_path ? *forced_path : choose_load_path(model, p.host);
    if (is_fork(p.path)) {
      p.source = fork_source(model, p.host, fork_link(p.path));
      if (!p.source) {
        // Any ready TE of the model serves a forced fork over its own link.
        const auto tes = running_tes(model.name);
        SERVESIM_CHECK(!tes.empty(), ErrorCode::kNoSource,
                       "no ready TE of " + model.name + " to fork from");
        p.source = tes.front();
      }
    }
    scale->placements.push_back(p);
  }

  // Commit.
  const Micros now = sim_.now();
  for (auto& p : scale->placements) {
    ScalingTimeline t;
    t.host = p.host;
    t.path = p.path;
    t.started_at = now;
    if (p.prewarmed) {
      std::erase(prewarmed_, *p.prewarmed);
      auto& slot = slots_.at(*p.prewarmed);
      slot.pooled = false;
      slot.model = model.name;
      ++counters_.tes_consumed;
      t.te = *p.prewarmed;
    } else {
      if (p.pod_from_pool) {
        --pods_;
        ++counters_.pods_consumed;
      } else {
        t.scaler_pre = seconds_to_micros(constants_.pod_create_s);
      }
      t.te = new_slot(p.host, take_npus(p.host, model.tp_degree));
      slots_.at(t.te).model = model.name;
      const double startup =
          constants_.te_startup_s *
          (constants_.optimized_startup ? constants_.optimized_startup_factor
                                        : 1.0);
      t.te_pre_load = seconds_to_micros(startup);
    }
    scale->timelines.push_back(t);
  }
  scale->pre_load_done.assign(scale->placements.size(), std::nullopt);
  scale->remaining = scale->placements.size();
  scale->on_done = std::move(on_done);

  for (size_t i = 0; i < scale->placements.size(); ++i) {
    const auto& t = scale->timelines[i];
    sim_.schedule(now + t.scaler_pre, sim::EventKind::kScaleStepComplete,
                  [this, scale, i] {
                    const auto& tl = scale->timelines[i];
                    sim_.schedule_after(
                        tl.te_pre_load, sim::EventKind::kScaleStepComplete,
                        [this, scale, i] {
                          scale->pre_load_done[i] = sim_.now();
                          const auto path = scale->placements[i].path;
                          if (path == LoadPath::kDramHit ||
                              path == LoadPath::kDramMiss) {
                            start_local_load(scale, i);
                          } else {
                            maybe_start_forks(scale);
                          }
                        });
                  });
  }
}

void Autoscaler::start_local_load(const std::shared_ptr<PendingScale>& scale,
                                  size_t i) {
  const auto& model = scale->model;
  const auto& slot = slots_.at(scale->timelines[i].te);
  const Micros ssd =
      scale->placements[i].path == LoadPath::kDramMiss
          ? ceil_micros(static_cast<double>(model.shard_bytes()) /
                        constants_.ssd_bandwidth * 1e6)
          : 0;
  const HostId host = slot.host;
  const std::vector<int32_t> npus = slot.npus;
  sim_.schedule_after(ssd, sim::EventKind::kScaleStepComplete,
                      [this, scale, i, host, npus] {
    // One PCIe flow per rank; ranks on a host share its lanes.
    auto left = std::make_shared<size_t>(npus.size());
    for (int32_t npu : npus) {
      fabric_->transfer(
          group_, dram_endpoint(host), npu_endpoint(host, npu),
          scale->model.shard_bytes(),
          [this, scale, i, left](const distflow::TransferTicket&) {
            if (--*left > 0) {
              return;
            }
            sim_.schedule_after(seconds_to_micros(constants_.tensor_init_s),
                                sim::EventKind::kScaleStepComplete,
                                [this, scale, i] { on_loaded(scale, i); });
          });
    }
  });
}

void Autoscaler::maybe_start_forks(const std::shared_ptr<PendingScale>& scale) {
  if (scale->forks_started) {
    return;
  }
  std::map<TeId, std::vector<size_t>> by_source;
  for (size_t i = 0; i < scale->placements.size(); ++i) {
    const auto& p = scale->placements[i];
    if (!p.source) {
      continue;
    }
    if (!scale->pre_load_done[i]) {
      return;  // the broadcast waits for every target
    }
    by_source[*p.source].push_back(i);
  }
  scale->forks_started = true;
  for (const auto& [source, idx] : by_source) {
    std::vector<TeId> targets;
    for (size_t i : idx) {
      targets.push_back(scale->timelines[i].te);
    }
    fork_broadcast(scale->model, source, targets,
                   [this, scale, idx](Micros) {
                     for (size_t i : idx) {
                       on_loaded(scale, i);
                     }
                   });
  }
}

void Autoscaler::fork_broadcast(const ModelSpec& model, TeId source,
                                const std::vector<TeId>& targets,
                                ForkCallback on_done) {
  auto src = slots_.find(source);
  SERVESIM_CHECK(src != slots_.end() && src->second.ready &&
                     src->second.model == model.name,
                 ErrorCode::kNoSource,
                 "TE " + std::to_string(source) + " is not a ready " +
                     model.name + " TE");
  SERVESIM_CHECK(!targets.empty(), ErrorCode::kInvalidArgument,
                 "fork needs targets");
  const auto& s = src->second;
  for (TeId t : targets) {
    SERVESIM_CHECK(slots_.count(t) > 0 &&
                       slots_.at(t).npus.size() == s.npus.size(),
                   ErrorCode::kInvalidArgument,
                   "fork target " + std::to_string(t) + " has a different shape");
  }
  const Micros start = sim_.now();
  if (hooks_.on_fork_source) {
    hooks_.on_fork_source(source, constants_.fork_interference);
  }
  auto left = std::make_shared<size_t>(s.npus.size());
  for (size_t r = 0; r < s.npus.size(); ++r) {
    std::vector<distflow::EndpointId> dsts;
    for (TeId t : targets) {
      const auto& slot = slots_.at(t);
      dsts.push_back(npu_endpoint(slot.host, slot.npus[r]));
    }
    fabric_->broadcast(
        group_, npu_endpoint(s.host, s.npus[r]), dsts, model.shard_bytes(),
        [this, left, start, source,
         on_done](const distflow::TransferTicket&) {
          if (--*left > 0) {
            return;
          }
          if (hooks_.on_fork_source) {
            hooks_.on_fork_source(source, 1.0);
          }
          if (on_done) {
            on_done(sim_.now() - start);
          }
        });
  }
}

void Autoscaler::on_loaded(const std::shared_ptr<PendingScale>& scale,
                           size_t i) {
  auto& t = scale->timelines[i];
  t.te_load = sim_.now() - *scale->pre_load_done[i];
  t.te_post_load = seconds_to_micros(constants_.profile_lookup_s) +
                   seconds_to_micros(constants_.block_alloc_s) +
                   dummy_request_time(scale->model);
  t.scaler_post = seconds_to_micros(constants_.push_latency_s);
  sim_.schedule_after(
      t.te_post_load, sim::EventKind::kScaleStepComplete, [this, scale, i] {
        const auto& tl = scale->timelines[i];
        sim_.schedule_after(
            tl.scaler_post, sim::EventKind::kTeReady, [this, scale, i] {
              const auto& done = scale->timelines[i];
              slots_.at(done.te).ready = true;
              if (hooks_.on_te_ready) {
                hooks_.on_te_ready(done);
              }
              if (--scale->remaining == 0 && scale->on_done) {
                scale->on_done(scale->timelines);
              }
            });
      });
}

std::vector<ScalingTimeline> Autoscaler::scale_up_blocking(
    int32_t n, const ModelSpec& model, std::optional<LoadPath> forced_path) {
  std::vector<ScalingTimeline> out;
  bool done = false;
  scale_up(n, model, forced_path,
           [&](const std::vector<ScalingTimeline>& t) {
             out = t;
             done = true;
           });
  sim_.run();
  SERVESIM_CHECK(done, ErrorCode::kInvalidArgument,
                 "scale-up did not complete");
  return out;
}

}  // namespace servesim::autoscaler
