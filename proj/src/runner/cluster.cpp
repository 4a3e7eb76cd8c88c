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

#include "servesim/runner/cluster.h"

#include <algorithm>

#include "servesim/common/error.h"

namespace servesim::runner {

namespace {

using autoscaler::Autoscaler;
using engine::SeqView;
using workload::TaskKind;
using workload::TaskState;

constexpr const char* kColocatedKind = "colocated";
constexpr const char* kDisaggKind = "disaggregated";

}  // namespace

Cluster::Cluster(const ClusterConfig& config, sim::Simulator& sim,
                 Policy policy, dsched::Heatmap heatmap)
    : config_(config),
      sim_(sim),
      policy_(policy),
      heatmap_(std::move(heatmap)),
      colocated_tree_(config.colocated.block_size),
      prefill_tree_(config.prefill.block_size) {
  validate(config_);
  if (policy_uses_heatmap(policy_)) {
    SERVESIM_CHECK(heatmap_.axes.rows() > 0 &&
                       heatmap_.cells.size() == heatmap_.axes.rows(),
                   ErrorCode::kConfigError, "policy needs a heatmap");
  }
  matcher_ = dsched::tree_matcher(colocated_tree_, prefill_tree_);

  distflow::Topology topo;
  topo.set_scale_up_across_hosts(config_.scale_up_across_hosts);
  std::vector<distflow::EndpointId> all;
  for (size_t h = 0; h < config_.hosts.size(); ++h) {
    const auto host = static_cast<distflow::HostId>(h);
    topo.add_endpoint(Autoscaler::dram_endpoint(host), host,
                      distflow::EndpointKind::kDram);
    all.push_back(Autoscaler::dram_endpoint(host));
    for (int32_t n = 0; n < config_.hosts[h].npus; ++n) {
      topo.add_endpoint(Autoscaler::npu_endpoint(host, n), host,
                        distflow::EndpointKind::kNpu);
      all.push_back(Autoscaler::npu_endpoint(host, n));
    }
  }
  fabric_ = std::make_unique<distflow::Fabric>(sim_, std::move(topo),
                                               config_.links);
  group_ = fabric_->link_cluster(all);

  if (config_.autoscale.enabled) {
    autoscaler::ScalerClusterSpec spec{config_.hosts,
                                       config_.scale_up_across_hosts,
                                       config_.links};
    scaler_ = std::make_unique<Autoscaler>(sim_, spec, config_.scaling);
    scaler_->provision_pods(config_.autoscale.prewarmed_pods);
    scale_policy_ =
        std::make_unique<autoscaler::ScalePolicy>(config_.autoscale.policy);
  }

  // First fit in order: colocated TEs, then each pair's prefill and decode.
  std::vector<int32_t> next_npu(config_.hosts.size(), 0);
  auto place = [&](int32_t npus) -> distflow::HostId {
    for (size_t h = 0; h < config_.hosts.size(); ++h) {
      if (config_.hosts[h].npus - next_npu[h] >= npus) {
        return static_cast<distflow::HostId>(h);
      }
    }
    throw Error(ErrorCode::kConfigError, "hosts cannot hold the TE layout");
  };
  for (int32_t i = 0; i < config_.colocated_tes; ++i) {
    const auto host = place(config_.colocated.tp_degree);
    const TeId id = add_te(config_.colocated, host, next_npu[host]);
    next_npu[host] += config_.colocated.tp_degree;
    colocated_.push_back(id);
    wire_colocated(id);
    if (scaler_) {
      scaler_ids_[id] = scaler_->add_running_te(config_.model, host);
    }
  }
  for (int32_t i = 0; i < config_.disagg_pairs; ++i) {
    Pair pair;
    for (const auto* role : {&config_.prefill, &config_.decode}) {
      const auto host = place(role->tp_degree);
      const TeId id = add_te(*role, host, next_npu[host]);
      next_npu[host] += role->tp_degree;
      (role == &config_.prefill ? pair.prefill : pair.decode) = id;
      if (scaler_) {
        // Holds the NPUs; the name never matches a scale request.
        autoscaler::ModelSpec holder = config_.model;
        holder.name += "#pair";
        holder.tp_degree = role->tp_degree;
        scaler_->add_running_te(holder, host);
      }
    }
    pairs_.push_back(pair);
    wire_pair(pair);
  }
  if (scaler_) {
    Autoscaler::Hooks hooks;
    hooks.on_fork_source = [this](TeId source, double factor) {
      for (const auto& [cluster_id, scaler_id] : scaler_ids_) {
        if (scaler_id == source) {
          tes_.at(cluster_id)->set_interference(factor);
        }
      }
    };
    hooks.on_te_ready = [this](const autoscaler::ScalingTimeline& t) {
      const TeId id = add_te(config_.colocated, t.host, 0);
      wire_colocated(id);
      colocated_.push_back(id);
      scaled_.push_back(id);
      scaler_ids_[id] = t.te;
      --scaling_in_flight_;
      scale_events_.push_back({{"at_us", sim_.now()},
                               {"action", "ready"},
                               {"te", id},
                               {"timeline", autoscaler::timeline_to_json(t)}});
    };
    scaler_->set_hooks(std::move(hooks));
  }
}

Cluster::~Cluster() = default;

TeId Cluster::add_te(const engine::EngineConfig& config, distflow::HostId host,
                     int32_t npu) {
  const TeId id = next_te_++;
  auto te = std::make_unique<engine::TaskExecutor>(id, config, sim_);
  te->attach_fabric(fabric_.get(), group_, Autoscaler::npu_endpoint(host, npu),
                    config.dram_blocks_capacity > 0
                        ? Autoscaler::dram_endpoint(host)
                        : -1);
  tes_.emplace(id, std::move(te));
  return id;
}

void Cluster::wire_colocated(TeId id) {
  auto& metrics = sim_.metrics();
  engine::EngineHooks h;
  h.on_admitted = [this, &metrics](const SeqView& v, int64_t cached) {
    metrics.on_started(v.metrics_handle);
    metrics.on_cached_prefix(v.metrics_handle, cached);
    jobs_.at(v.request->id).mark(TaskKind::kColocated, TaskState::kRunning);
  };
  h.on_token = [&metrics](const SeqView& v, Micros t) {
    metrics.on_token(v.metrics_handle, t);
  };
  h.on_finished = [this, &metrics](const SeqView& v, Micros t) {
    metrics.on_completed(v.metrics_handle, t);
    jobs_.at(v.request->id).mark(TaskKind::kColocated, TaskState::kDone);
    on_resolved();
  };
  h.on_rejected = [this, &metrics](const SeqView& v, Micros t) {
    metrics.on_rejected(v.metrics_handle, t);
    on_resolved();
  };
  auto& te = *tes_.at(id);
  te.set_hooks(std::move(h));
  te.rtc().set_prefix_listeners(
      [this, id](std::span<const TokenId> t) { colocated_tree_.add(id, t); },
      [this, id](std::span<const TokenId> t) {
        colocated_tree_.remove(id, t);
      });
}

void Cluster::wire_pair(const Pair& pair) {
  auto& metrics = sim_.metrics();
  auto& prefill = *tes_.at(pair.prefill);
  auto& decode = *tes_.at(pair.decode);

  engine::EngineHooks p;
  p.on_admitted = [this, &metrics](const SeqView& v, int64_t cached) {
    metrics.on_started(v.metrics_handle);
    metrics.on_cached_prefix(v.metrics_handle, cached);
    jobs_.at(v.request->id).mark(TaskKind::kPrefill, TaskState::kRunning);
  };
  p.on_token = [&metrics](const SeqView& v, Micros t) {
    metrics.on_token(v.metrics_handle, t);
  };
  p.on_finished = [this, &metrics](const SeqView& v, Micros t) {
    // One-token outputs never reach the decode TE.
    metrics.on_completed(v.metrics_handle, t);
    auto& job = jobs_.at(v.request->id);
    job.mark(TaskKind::kPrefill, TaskState::kDone);
    job.mark(TaskKind::kDecode, TaskState::kDone);
    on_resolved();
  };
  p.on_rejected = [this, &metrics](const SeqView& v, Micros t) {
    metrics.on_rejected(v.metrics_handle, t);
    on_resolved();
  };
  p.on_prefill_done = [&prefill, &decode](const SeqView& v) {
    engine::handoff_kv(prefill, decode, *v.request, v.metrics_handle,
                       v.seq_id);
  };
  prefill.set_hooks(std::move(p));
  const TeId pid = pair.prefill;
  prefill.rtc().set_prefix_listeners(
      [this, pid](std::span<const TokenId> t) { prefill_tree_.add(pid, t); },
      [this, pid](std::span<const TokenId> t) {
        prefill_tree_.remove(pid, t);
      });

  engine::EngineHooks d;
  d.on_handoff_received = [this](const SeqView& v) {
    auto& job = jobs_.at(v.request->id);
    job.mark(TaskKind::kPrefill, TaskState::kDone);
    job.mark(TaskKind::kDecode, TaskState::kRunning);
  };
  d.on_token = [&metrics](const SeqView& v, Micros t) {
    metrics.on_token(v.metrics_handle, t);
  };
  d.on_finished = [this, &metrics](const SeqView& v, Micros t) {
    metrics.on_completed(v.metrics_handle, t);
    jobs_.at(v.request->id).mark(TaskKind::kDecode, TaskState::kDone);
    on_resolved();
  };
  d.on_rejected = [this, &metrics](const SeqView& v, Micros t) {
    metrics.on_rejected(v.metrics_handle, t);
    on_resolved();
  };
  decode.set_hooks(std::move(d));
}

std::vector<dsched::GroupMember> Cluster::members() const {
  std::vector<dsched::GroupMember> out;
  for (TeId id : colocated_) {
    const auto& te = *tes_.at(id);
    out.push_back({dsched::MemberKind::kColocated, id, -1, te.queued_tokens(),
                   te.running_tokens()});
  }
  for (const auto& pair : pairs_) {
    const auto& p = *tes_.at(pair.prefill);
    const auto& d = *tes_.at(pair.decode);
    out.push_back({dsched::MemberKind::kDisaggPair, pair.prefill, pair.decode,
                   p.queued_tokens() + d.queued_tokens(),
                   p.running_tokens() + d.running_tokens()});
  }
  return out;
}

dsched::GroupMember Cluster::choose(const workload::Request& request) {
  const auto group = members();
  switch (policy_) {
    case Policy::kRoundRobin:
      return group[rr_next_++ % group.size()];
    case Policy::kLoadOnly:
      return dsched::load_aware(group);
    case Policy::kLocalityOnly:
      return dsched::locality_aware(request, group, matcher_);
    case Policy::kPdOnly:
      return dsched::load_aware(
          dsched::pd_aware(request, group, heatmap_, config_.predictor));
    case Policy::kCombined:
      return dsched::dist_sched(request, group, heatmap_, config_.predictor,
                                matcher_, config_.balance_epsilon);
  }
  return group.front();
}

void Cluster::schedule_trace(const std::vector<workload::Request>& requests) {
  expected_ += static_cast<int64_t>(requests.size());
  for (const auto& r : requests) {
    sim_.schedule(r.arrival, sim::EventKind::kRequestArrival,
                  [this, &r] { submit(r); });
  }
  if (scaler_ && !requests.empty()) {
    sim_.schedule(requests.front().arrival + config_.autoscale.interval,
                  sim::EventKind::kScaleStepComplete,
                  [this] { autoscale_tick(); });
  }
}

void Cluster::submit(const workload::Request& request) {
  auto& metrics = sim_.metrics();
  ++arrived_;
  const auto handle =
      metrics.on_arrival(request.id, request.arrival, request.prompt_len());
  SERVESIM_CHECK(jobs_.count(request.id) == 0, ErrorCode::kInvalidSpec,
                 "duplicate request id '" + request.id + "'");
  if (colocated_.empty() && pairs_.empty()) {
    jobs_.emplace(request.id, workload::Job::colocated(request.id, -1));
    metrics.on_rejected(handle, sim_.now());
    on_resolved();
    return;
  }
  const auto member = choose(request);
  ++routed_[member.id];
  if (member.kind == dsched::MemberKind::kColocated) {
    jobs_.emplace(request.id, workload::Job::colocated(request.id, member.id));
    metrics.on_assigned(handle, member.id, kColocatedKind);
    tes_.at(member.id)->enqueue(request, handle, TaskKind::kColocated);
  } else {
    jobs_.emplace(request.id, workload::Job::disaggregated(
                                  request.id, member.id, member.decode_te));
    metrics.on_assigned(handle, member.id, kDisaggKind);
    tes_.at(member.id)->enqueue(request, handle, TaskKind::kPrefill);
  }
}

void Cluster::on_resolved() { ++resolved_; }

void Cluster::autoscale_tick() {
  if (arrived_ >= expected_ && resolved_ >= expected_) {
    return;
  }
  const Micros now = sim_.now();
  const auto& records = sim_.metrics().records();
  autoscaler::MetricsWindow w;
  w.at = now;
  // Requests finishing inside the window.
  for (const auto& r : records) {
    if (r.completion && *r.completion > now - config_.autoscale.interval &&
        *r.completion <= now) {
      ++w.requests;
      const auto ttft = r.ttft();
      const auto tpot = r.tpot();
      if ((ttft && *ttft > config_.slo.ttft) ||
          (tpot && *tpot > static_cast<double>(config_.slo.tpot))) {
        ++w.slo_violations;
      }
    }
  }
  const auto group = members();
  double queued = 0.0;
  for (const auto& m : group) {
    queued += static_cast<double>(m.queued_tokens);
  }
  w.mean_queued_tokens_per_te =
      group.empty() ? 0.0 : queued / static_cast<double>(group.size());
  if (w.requests == 0 && w.mean_queued_tokens_per_te > 0) {
    w.requests = 1;
  }
  if (w.requests > 0) {
    const auto decision = scale_policy_->evaluate(w);
    if (decision.action == autoscaler::ScaleAction::kUp) {
      const int32_t room = config_.autoscale.max_extra_tes -
                           static_cast<int32_t>(scaled_.size()) -
                           scaling_in_flight_;
      const int32_t n = std::min(decision.count, room);
      if (n > 0) {
        try {
          scaler_->scale_up(n, config_.model, std::nullopt, {});
          scaling_in_flight_ += n;
          scale_events_.push_back(
              {{"at_us", now}, {"action", "up"}, {"count", n}});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kInsufficientResources) {
            throw;
          }
          scale_events_.push_back(
              {{"at_us", now}, {"action", "blocked"}, {"count", n}});
        }
      }
    } else if (decision.action == autoscaler::ScaleAction::kDown) {
      for (auto it = scaled_.rbegin(); it != scaled_.rend(); ++it) {
        auto& te = *tes_.at(*it);
        if (te.load() == 0 && !te.busy() && te.pending_handoffs() == 0) {
          const TeId id = *it;
          std::erase(colocated_, id);
          colocated_tree_.remove_te(id);
          scaler_->release_te(scaler_ids_.at(id));
          scaler_ids_.erase(id);
          scaled_.erase(std::next(it).base());
          scale_events_.push_back(
              {{"at_us", now}, {"action", "down"}, {"te", id}});
          break;
        }
      }
    }
  }
  sim_.schedule_after(config_.autoscale.interval,
                      sim::EventKind::kScaleStepComplete,
                      [this] { autoscale_tick(); });
}

nlohmann::json Cluster::te_stats() const {
  auto out = nlohmann::json::array();
  for (const auto& [id, te] : tes_) {
    out.push_back({{"te", id},
                   {"mode", engine::engine_mode_name(te->mode())},
                   {"tp_degree", te->config().tp_degree},
                   {"iterations", te->iterations()},
                   {"busy_us", te->busy_time()},
                   {"preemptions", te->preemptions()},
                   {"routed", routed_.count(id) ? routed_.at(id) : 0}});
  }
  return out;
}

nlohmann::json summarize_metrics(const sim::MetricsStore& metrics,
                                 const SloTargets& slo) {
  const auto counts = metrics.status_counts();
  auto dist = [](const sim::Distribution& d) {
    return nlohmann::json{{"count", d.count},
                          {"mean", d.mean},
                          {"p50", d.p50},
                          {"p99", d.p99}};
  };
  // Violations: anything not completed, or a completed request over either
  // latency target.
  int64_t violations = 0;
  std::optional<Micros> first_arrival;
  std::optional<Micros> last_completion;
  for (const auto& r : metrics.records()) {
    first_arrival = std::min(first_arrival.value_or(r.arrival), r.arrival);
    if (r.status != sim::RequestStatus::kCompleted) {
      ++violations;
      continue;
    }
    last_completion =
        std::max(last_completion.value_or(*r.completion), *r.completion);
    const auto tpot = r.tpot();
    if (*r.ttft() > slo.ttft ||
        (tpot && *tpot > static_cast<double>(slo.tpot))) {
      ++violations;
    }
  }
  const int64_t total = counts.total();
  const double makespan_s =
      first_arrival && last_completion
          ? micros_to_seconds(*last_completion - *first_arrival)
          : 0.0;
  return {
      {"requests", total},
      {"completed", counts.completed},
      {"rejected", counts.rejected},
      {"in_flight", counts.in_flight},
      {"queued", counts.queued},
      {"ttft_us", dist(metrics.ttft())},
      {"tpot_us", dist(metrics.tpot())},
      {"jct_us", dist(metrics.jct())},
      {"makespan_s", makespan_s},
      {"throughput_rps",
       makespan_s > 0 ? static_cast<double>(counts.completed) / makespan_s
                      : 0.0},
      {"slo_violations", violations},
      {"slo_violation_rate",
       total > 0 ? static_cast<double>(violations) / static_cast<double>(total)
                 : 0.0},
      {"cache_hit_tokens", metrics.cached_prefix_tokens()},
  };
}

RunResult run_trace(const ClusterConfig& config,
                    const std::vector<workload::Request>& requests,
                    Policy policy, const dsched::Heatmap& heatmap) {
  sim::Simulator sim;
  Cluster cluster(config, sim, policy, heatmap);
  cluster.schedule_trace(requests);
  sim.run();
  RunResult out;
  out.metrics = sim.metrics();
  out.summary = summarize_metrics(out.metrics, config.slo);
  out.te_stats = cluster.te_stats();
  out.scale_events = cluster.scale_events();
  out.arrived = cluster.arrived();
  const auto counts = out.metrics.status_counts();
  out.conserved = counts.total() == out.arrived &&
                  out.arrived == static_cast<int64_t>(requests.size());
  out.event_digest = sim.trace_digest();
  return out;
}

}  // namespace servesim::runner
