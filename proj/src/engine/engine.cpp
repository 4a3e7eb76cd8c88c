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

#include "servesim/engine/engine.h"

#include <algorithm>
#include <cmath>

#include "servesim/common/error.h"

namespace servesim::engine {

using workload::TaskKind;

std::string_view engine_mode_name(EngineMode mode) {
  switch (mode) {
    case EngineMode::kPrefillOnly:
      return "prefill";
    case EngineMode::kDecodeOnly:
      return "decode";
    case EngineMode::kColocated:
      return "colocated";
  }
  return "unknown";
}

EngineMode engine_mode_from_name(std::string_view name) {
  if (name == "prefill") {
    return EngineMode::kPrefillOnly;
  }
  if (name == "decode") {
    return EngineMode::kDecodeOnly;
  }
  if (name == "colocated") {
    return EngineMode::kColocated;
  }
  throw Error(ErrorCode::kConfigError,
              "unknown engine mode '" + std::string(name) + "'");
}

CostModel EngineConfig::effective_cost() const {
  CostModel c = cost;
  const double scale =
      static_cast<double>(cost_ref_tp) / static_cast<double>(tp_degree);
  c.a_p *= scale;
  c.a_d *= scale;
  c.c_d *= scale;
  return c;
}

rtc::RtcConfig EngineConfig::rtc_config() const {
  rtc::RtcConfig r;
  r.block_size = block_size;
  r.npu_capacity = npu_blocks_capacity;
  r.dram_capacity = dram_blocks_capacity;
  r.block_bytes = static_cast<int64_t>(block_size) * kv_bytes_per_token;
  return r;
}

void validate(const EngineConfig& c) {
  const auto& k = c.cost;
  SERVESIM_CHECK(k.a_p >= 0 && k.b_p >= 0 && k.a_d >= 0 && k.c_d >= 0 &&
                     k.b_d >= 0,
                 ErrorCode::kConfigError, "cost coefficients must be >= 0");
  SERVESIM_CHECK(c.tp_degree >= 1 && c.cost_ref_tp >= 1,
                 ErrorCode::kConfigError, "tp degrees must be >= 1");
  SERVESIM_CHECK(c.chunk_size >= 1 && c.chunk_size <= c.max_batch_tokens,
                 ErrorCode::kConfigError,
                 "need 1 <= chunk_size <= max_batch_tokens");
  SERVESIM_CHECK(c.block_size >= 1 && c.kv_bytes_per_token > 0,
                 ErrorCode::kConfigError, "invalid KV geometry");
  SERVESIM_CHECK(c.npu_blocks_capacity >= 1 && c.dram_blocks_capacity >= 0,
                 ErrorCode::kConfigError, "invalid block capacities");
  SERVESIM_CHECK(c.sched_overhead >= 0, ErrorCode::kConfigError,
                 "sched_overhead must be >= 0");
  SERVESIM_CHECK(c.layer_overlap > 0.0 && c.layer_overlap <= 1.0,
                 ErrorCode::kConfigError, "layer_overlap must be in (0, 1]");
}

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

}  // namespace

EngineConfig engine_config_from_json(const nlohmann::json& j,
                                     const EngineConfig& base) {
  static const std::set<std::string> kKeys = {
      "mode",          "tp_degree",           "cost_ref_tp",
      "cost",          "npu_blocks_capacity", "dram_blocks_capacity",
      "block_size",    "kv_bytes_per_token",  "chunk_size",
      "max_batch_tokens", "sched_overhead_us", "async_sched",
      "swap_preemption", "offload_prefix_to_dram", "kv_transfer",
      "layer_overlap", "comment"};
  SERVESIM_CHECK(j.is_object(), ErrorCode::kConfigError,
                 "engine config must be an object");
  for (const auto& [key, value] : j.items()) {
    SERVESIM_CHECK(kKeys.count(key) > 0, ErrorCode::kConfigError,
                   "unknown engine key '" + key + "'");
  }
  EngineConfig c = base;
  try {
    if (j.contains("mode")) {
      c.mode = engine_mode_from_name(j.at("mode").get<std::string>());
    }
    read(j, "tp_degree", c.tp_degree);
    read(j, "cost_ref_tp", c.cost_ref_tp);
    if (j.contains("cost")) {
      const auto& k = j.at("cost");
      read(k, "a_p", c.cost.a_p);
      read(k, "b_p", c.cost.b_p);
      read(k, "a_d", c.cost.a_d);
      read(k, "c_d", c.cost.c_d);
      read(k, "b_d", c.cost.b_d);
    }
    read(j, "npu_blocks_capacity", c.npu_blocks_capacity);
    read(j, "dram_blocks_capacity", c.dram_blocks_capacity);
    read(j, "block_size", c.block_size);
    read(j, "kv_bytes_per_token", c.kv_bytes_per_token);
    read(j, "chunk_size", c.chunk_size);
    read(j, "max_batch_tokens", c.max_batch_tokens);
    read(j, "sched_overhead_us", c.sched_overhead);
    read(j, "async_sched", c.async_sched);
    read(j, "swap_preemption", c.swap_preemption);
    read(j, "offload_prefix_to_dram", c.offload_prefix_to_dram);
    if (j.contains("kv_transfer")) {
      const auto mode = j.at("kv_transfer").get<std::string>();
      SERVESIM_CHECK(mode == "by_request" || mode == "by_layer",
                     ErrorCode::kConfigError,
                     "kv_transfer must be by_request or by_layer");
      c.kv_transfer = mode == "by_layer" ? KvTransferMode::kByLayer
                                         : KvTransferMode::kByRequest;
    }
    read(j, "layer_overlap", c.layer_overlap);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  validate(c);
  return c;
}

nlohmann::json engine_config_to_json(const EngineConfig& c) {
  return {
      {"mode", engine_mode_name(c.mode)},
      {"tp_degree", c.tp_degree},
      {"cost_ref_tp", c.cost_ref_tp},
      {"cost",
       {{"a_p", c.cost.a_p},
        {"b_p", c.cost.b_p},
        {"a_d", c.cost.a_d},
        {"c_d", c.cost.c_d},
        {"b_d", c.cost.b_d}}},
      {"npu_blocks_capacity", c.npu_blocks_capacity},
      {"dram_blocks_capacity", c.dram_blocks_capacity},
      {"block_size", c.block_size},
      {"kv_bytes_per_token", c.kv_bytes_per_token},
      {"chunk_size", c.chunk_size},
      {"max_batch_tokens", c.max_batch_tokens},
      {"sched_overhead_us", c.sched_overhead},
      {"async_sched", c.async_sched},
      {"swap_preemption", c.swap_preemption},
      {"offload_prefix_to_dram", c.offload_prefix_to_dram},
      {"kv_transfer",
       c.kv_transfer == KvTransferMode::kByLayer ? "by_layer" : "by_request"},
      {"layer_overlap", c.layer_overlap},
  };
}

int64_t IterationPlan::prefill_tokens() const {
  int64_t n = 0;
  for (const auto& [seq, tokens] : prefill_chunks) {
    n += tokens;
  }
  return n;
}

double iteration_duration(const CostModel& cost, int64_t decode_members,
                          int64_t prefill_tokens, int64_t prefill_chunks,
                          int64_t kv_blocks_touched) {
  double d = 0.0;
  if (prefill_chunks > 0) {
    d += cost.b_p + cost.a_p * static_cast<double>(prefill_tokens);
  }
  if (decode_members > 0) {
    d += cost.b_d + cost.a_d * static_cast<double>(decode_members) +
         cost.c_d * static_cast<double>(kv_blocks_touched);
  }
  return d;
}

double iteration_wall_time(double duration, Micros sched_overhead,
                           bool async_sched) {
  const auto s = static_cast<double>(sched_overhead);
  return async_sched ? std::max(duration, s) : duration + s;
}

int64_t handoff_bytes(const EngineConfig& decode_config,
                      int64_t prompt_tokens) {
  const double full =
      static_cast<double>(prompt_tokens * decode_config.kv_bytes_per_token);
  if (decode_config.kv_transfer == KvTransferMode::kByLayer) {
    return std::max<int64_t>(
        1, std::llround(full * decode_config.layer_overlap));
  }
  return static_cast<int64_t>(full);
}

// ---------------------------------------------------------------------------
// TaskExecutor
// ---------------------------------------------------------------------------

TaskExecutor::TaskExecutor(TeId id, const EngineConfig& config,
                           sim::Simulator& sim)
    : id_(id),
      config_(config),
      cost_(config.effective_cost()),
      sim_(sim),
      rtc_((validate(config), config.rtc_config()), sim) {}

void TaskExecutor::attach_fabric(distflow::Fabric* fabric,
                                 const distflow::ChannelGroup& group,
                                 distflow::EndpointId npu_ep,
                                 distflow::EndpointId dram_ep) {
  fabric_ = fabric;
  group_ = group;
  npu_ep_ = npu_ep;
  if (fabric_ != nullptr && dram_ep >= 0) {
    rtc_.attach_fabric(fabric_, group_, dram_ep, npu_ep);
  }
}

SeqView TaskExecutor::view(const Sequence& s) const {
  return SeqView{s.id, s.request, s.metrics_handle, s.role};
}

TaskExecutor::QueueKey TaskExecutor::key(const Sequence& s) const {
  return {s.request->priority, s.request->arrival, s.id};
}

int64_t TaskExecutor::blocks_for(int64_t tokens) const {
  return (tokens + config_.block_size - 1) / config_.block_size;
}

bool TaskExecutor::can_alloc(int64_t n) const {
  return n <= 0 || rtc_.can_allocate(n);
}

bool TaskExecutor::is_decoding(const Sequence& s) const {
  return s.phase == Phase::kRunning && s.kv_len >= s.prefill_target &&
         s.generated >= 1 && s.generated < s.request->true_decode_len;
}

bool TaskExecutor::reuse_beneficial(int64_t off_npu_blocks,
                                    int64_t cached_tokens) const {
  return static_cast<double>(rtc_.estimate_fetch(off_npu_blocks)) <
         cost_.a_p * static_cast<double>(cached_tokens);
}

void TaskExecutor::enqueue(const workload::Request& request,
                           size_t metrics_handle, TaskKind role) {
  SERVESIM_CHECK(lifecycle_ == Lifecycle::kReady, ErrorCode::kNotReady,
                 "TE " + std::to_string(id_) + " is not ready");
  SERVESIM_CHECK(
      (role == TaskKind::kColocated && mode() == EngineMode::kColocated) ||
          (role == TaskKind::kPrefill && mode() == EngineMode::kPrefillOnly),
      ErrorCode::kInvalidArgument,
      std::string(workload::task_kind_name(role)) + " task on a " +
          std::string(engine_mode_name(mode())) + " TE");
  Sequence s;
  s.id = next_seq_++;
  s.request = &request;
  s.metrics_handle = metrics_handle;
  s.role = role;
  s.prefill_target = request.prompt_len();
  if (blocks_for(request.prompt_len() + 1) > config_.npu_blocks_capacity) {
    if (hooks_.on_rejected) {
      hooks_.on_rejected(view(s), sim_.now());
    }
    return;
  }

  auto match = request.context_id ? rtc_.match_by_id(*request.context_id)
                                   : rtc::MatchResult{};
  if (match.matched_token_count == 0) {
    match = rtc_.match_by_prefix_tokens(request.prompt_tokens);
  }
  const int64_t off = match.off_npu_blocks();
  const int64_t id = s.id;
  auto& stored = seqs_.emplace(id, std::move(s)).first->second;
  if (off > 0 && reuse_beneficial(off, match.matched_token_count)) {
    try {
      stored.phase = Phase::kParked;
      rtc_.populate(match,
                    [this, id](const rtc::PopulateTicket&) { make_ready(id); });
      return;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientNpuMemory) {
        throw;
      }
    }
  }
  stored.phase = Phase::kWaiting;
  waiting_.insert(key(stored));
  kick();
}

void TaskExecutor::make_ready(int64_t seq_id) {
  auto it = seqs_.find(seq_id);
  if (it == seqs_.end() || it->second.phase != Phase::kParked) {
    return;
  }
  it->second.phase = Phase::kWaiting;
  waiting_.insert(key(it->second));
  kick();
}

void TaskExecutor::admit(Sequence& s) {
  // Reuse the leading NPU-resident run of the cached prefix, keeping at least
  // one token to compute so the prefill produces logits.
  auto match = s.request->context_id
                   ? rtc_.match_by_id(*s.request->context_id)
                   : rtc::MatchResult{};
  if (match.matched_token_count == 0) {
    match = rtc_.match_by_prefix_tokens(s.request->prompt_tokens);
  }
  const int64_t cap = std::max<int64_t>(0, s.prefill_target - 1) /
                      config_.block_size;
  std::vector<rtc::BlockId> ids;
  for (const auto& [block, tier] : match.blocks) {
    if (tier != rtc::Tier::kNpu ||
        static_cast<int64_t>(ids.size()) >= cap) {
      break;
    }
    ids.push_back(block);
  }
  rtc_.acquire(ids);
  s.blocks = std::move(ids);
  s.kv_len = static_cast<int64_t>(s.blocks.size()) * config_.block_size;
}

bool TaskExecutor::grow(Sequence& s, int64_t tokens) {
  const int64_t need =
      blocks_for(s.kv_len + tokens) - static_cast<int64_t>(s.blocks.size());
  if (need <= 0) {
    return true;
  }
  if (!can_alloc(need)) {
    return false;
  }
  auto ids = rtc_.alloc_blocks(need);
  s.blocks.insert(s.blocks.end(), ids.begin(), ids.end());
  return true;
}

void TaskExecutor::release_blocks(Sequence& s) {
  if (!s.blocks.empty()) {
    rtc_.release(s.blocks);
    s.blocks.clear();
  }
}

void TaskExecutor::preempt(Sequence& s) {
  ++preemptions_;
  running_.erase(s.id);
  const auto n = static_cast<int64_t>(s.blocks.size());
  if (config_.swap_preemption && n > 0 &&
      rtc_.can_allocate(n, rtc::Tier::kDram)) {
    auto copies = rtc_.copy(s.blocks, rtc::Tier::kDram);
    for (size_t i = 0; i < copies.size(); ++i) {
      // Indexed sources return a shared cached replica; hold it.
      if (rtc_.block(copies[i]).indexed) {
        const rtc::BlockId one[] = {copies[i]};
        rtc_.acquire(one);
      }
    }
    s.swap_blocks = std::move(copies);
    release_blocks(s);
    s.phase = Phase::kSwapped;
    swapped_.insert(key(s));
  } else {
    release_blocks(s);
    // Recompute everything that had KV, i.e. all but the last emitted token.
    s.prefill_target = s.request->prompt_len() +
                       std::max<int64_t>(0, s.generated - 1);
    s.kv_len = 0;
    s.phase = Phase::kWaiting;
    waiting_.insert(key(s));
  }
  if (hooks_.on_blocks_freed) {
    hooks_.on_blocks_freed();
  }
}

void TaskExecutor::try_swap_in() {
  while (!swapped_.empty()) {
    auto& s = seqs_.at(std::get<2>(*swapped_.begin()));
    const auto n = static_cast<int64_t>(s.swap_blocks.size());
    if (!can_alloc(n + 1)) {
      return;
    }
    swapped_.erase(swapped_.begin());
    s.blocks = rtc_.alloc_blocks(n);
    s.phase = Phase::kSwappingIn;
    const int64_t id = s.id;
    sim_.schedule_after(rtc_.estimate_fetch(n),
                        sim::EventKind::kPopulateComplete, [this, id] {
                          auto it = seqs_.find(id);
                          if (it == seqs_.end()) {
                            return;
                          }
                          auto& seq = it->second;
                          rtc_.release(seq.swap_blocks);
                          seq.swap_blocks.clear();
                          seq.phase = Phase::kRunning;
                          running_.insert(id);
                          kick();
                        });
  }
}

IterationPlan TaskExecutor::plan_iteration() {
  IterationPlan plan;
  int64_t budget = config_.max_batch_tokens;

  std::vector<Sequence*> decoders;
  for (int64_t id : running_) {
    auto& s = seqs_.at(id);
    if (is_decoding(s)) {
      decoders.push_back(&s);
    }
  }
  std::sort(decoders.begin(), decoders.end(),
            [this](const Sequence* a, const Sequence* b) {
              return key(*a) < key(*b);
            });
  auto lowest_running = [this]() -> Sequence* {
    Sequence* victim = nullptr;
    for (int64_t id : running_) {
      auto& s = seqs_.at(id);
      if (victim == nullptr || key(s) > key(*victim)) {
        victim = &s;
      }
    }
    return victim;
  };
  for (Sequence* s : decoders) {
    if (s->phase != Phase::kRunning || budget <= 0) {
      continue;
    }
    bool ok = true;
    while (!grow(*s, 1)) {
      Sequence* victim = lowest_running();
      if (victim == s && running_.size() == 1) {
        // Alone and still out of blocks: it can never finish here.
        running_.erase(s->id);
        release_blocks(*s);
        if (hooks_.on_rejected) {
          hooks_.on_rejected(view(*s), sim_.now());
        }
        seqs_.erase(s->id);
        ok = false;
        break;
      }
      auto& members = plan.decode_members;
      auto pos = std::find(members.begin(), members.end(), victim->id);
      if (pos != members.end()) {
        members.erase(pos);
        ++budget;
      }
      preempt(*victim);
      if (victim == s) {
        ok = false;
        break;
      }
    }
    if (ok) {
      plan.decode_members.push_back(s->id);
      --budget;
    }
  }

  try_swap_in();

  // Prefill chunks, FCFS by (priority, arrival) across admitted and waiting
  // sequences, at most one chunk per sequence.
  std::vector<QueueKey> candidates;
  for (int64_t id : running_) {
    const auto& s = seqs_.at(id);
    if (s.kv_len < s.prefill_target) {
      candidates.push_back(key(s));
    }
  }
  candidates.insert(candidates.end(), waiting_.begin(), waiting_.end());
  std::sort(candidates.begin(), candidates.end());
  const int64_t watermark = config_.npu_blocks_capacity / 100;
  for (const auto& k : candidates) {
    auto& s = seqs_.at(std::get<2>(k));
    const bool fresh = s.phase == Phase::kWaiting;
    if (fresh) {
      admit(s);
    }
    const int64_t chunk =
        std::min(s.prefill_target - s.kv_len, config_.chunk_size);
    const int64_t need = blocks_for(s.kv_len + chunk) -
                         static_cast<int64_t>(s.blocks.size());
    const int64_t reserve = fresh && !running_.empty() ? watermark : 0;
    if (chunk > budget || !can_alloc(need + reserve)) {
      if (fresh) {
        release_blocks(s);
        s.kv_len = 0;
      }
      break;
    }
    grow(s, chunk);
    if (fresh) {
      waiting_.erase(k);
      s.phase = Phase::kRunning;
      running_.insert(s.id);
      if (!s.admitted_once) {
        s.admitted_once = true;
        s.cached_tokens = s.kv_len;
        if (hooks_.on_admitted) {
          hooks_.on_admitted(view(s), s.cached_tokens);
        }
      }
    }
    plan.prefill_chunks.emplace_back(s.id, chunk);
    budget -= chunk;
    if (budget <= 0) {
      break;
    }
  }

  for (int64_t id : plan.decode_members) {
    plan.kv_blocks_touched += static_cast<int64_t>(seqs_.at(id).blocks.size());
  }
  plan.duration = iteration_duration(
      cost_, static_cast<int64_t>(plan.decode_members.size()),
      plan.prefill_tokens(), static_cast<int64_t>(plan.prefill_chunks.size()),
      plan.kv_blocks_touched);
  return plan;
}

Micros TaskExecutor::execute_iteration(IterationPlan plan) {
  const double wall =
      iteration_wall_time(plan.duration, config_.sched_overhead,
                          config_.async_sched) *
      interference_;
  // Strictly positive so token times stay strictly increasing.
  const Micros w = std::max<Micros>(1, ceil_micros(wall));
  busy_ = true;
  const Micros start = sim_.now();
  sim_.schedule(start + w, sim::EventKind::kEngineStep,
                [this, plan = std::move(plan), start] {
                  on_iteration_done(plan, start);
                });
  return w;
}

void TaskExecutor::on_iteration_done(const IterationPlan& plan, Micros start) {
  if (lifecycle_ == Lifecycle::kFailed) {
    return;
  }
  busy_ = false;
  const Micros t = sim_.now();
  ++iterations_;
  busy_time_ += t - start;
  if (record_iterations_) {
    iteration_log_.push_back(
        {start, t, static_cast<int64_t>(plan.decode_members.size()),
         plan.prefill_tokens(), plan.duration});
  }
  for (int64_t id : plan.decode_members) {
    auto it = seqs_.find(id);
    if (it == seqs_.end()) {
      continue;
    }
    auto& s = it->second;
    s.kv_len += 1;
    s.generated += 1;
    if (hooks_.on_token) {
      hooks_.on_token(view(s), t);
    }
    if (s.generated >= s.request->true_decode_len) {
      finish(s, t);
    }
  }
  for (const auto& [id, tokens] : plan.prefill_chunks) {
    auto it = seqs_.find(id);
    if (it == seqs_.end()) {
      continue;
    }
    auto& s = it->second;
    s.kv_len += tokens;
    if (s.kv_len >= s.prefill_target) {
      on_prefill_complete(s, t);
    }
  }
  kick();
}

void TaskExecutor::commit(Sequence& s) {
  const auto& prompt = s.request->prompt_tokens;
  const int64_t nb = blocks_for(s.request->prompt_len());
  std::span<const rtc::BlockId> blocks(s.blocks.data(),
                                       static_cast<size_t>(nb));
  rtc_.commit_prefix(prompt, blocks);
  if (s.request->context_id && s.request->prefix) {
    const int64_t full = s.request->prefix->length / config_.block_size;
    if (full > 0) {
      rtc_.commit_prefix(
          std::span<const TokenId>(prompt.data(),
                                   static_cast<size_t>(full) *
                                       static_cast<size_t>(config_.block_size)),
          blocks.first(static_cast<size_t>(full)), s.request->context_id);
    }
  }
  if (config_.offload_prefix_to_dram && config_.dram_blocks_capacity > 0) {
    const int64_t full = s.request->prompt_len() / config_.block_size;
    try {
      rtc_.copy(blocks.first(static_cast<size_t>(full)), rtc::Tier::kDram);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOutOfMemory) {
        throw;
      }
    }
  }
}

void TaskExecutor::on_prefill_complete(Sequence& s, Micros t) {
  if (s.role != TaskKind::kDecode) {
    commit(s);
  }
  if (s.generated == 0) {
    s.generated = 1;
    if (hooks_.on_token) {
      hooks_.on_token(view(s), t);
    }
  }
  if (s.generated >= s.request->true_decode_len) {
    finish(s, t);
    return;
  }
  if (s.role == TaskKind::kPrefill) {
    running_.erase(s.id);
    s.phase = Phase::kHandingOff;
    if (hooks_.on_prefill_done) {
      hooks_.on_prefill_done(view(s));
    }
  }
}

void TaskExecutor::finish(Sequence& s, Micros t) {
  running_.erase(s.id);
  release_blocks(s);
  const SeqView v = view(s);
  seqs_.erase(s.id);
  if (hooks_.on_finished) {
    hooks_.on_finished(v, t);
  }
  if (hooks_.on_blocks_freed) {
    hooks_.on_blocks_freed();
  }
}

void TaskExecutor::handoff_done(int64_t seq_id) {
  auto it = seqs_.find(seq_id);
  if (it == seqs_.end()) {
    return;
  }
  release_blocks(it->second);
  seqs_.erase(it);
  if (hooks_.on_blocks_freed) {
    hooks_.on_blocks_freed();
  }
  kick();
}

void TaskExecutor::request_handoff(const Handoff& handoff) {
  SERVESIM_CHECK(lifecycle_ == Lifecycle::kReady, ErrorCode::kNotReady,
                 "TE " + std::to_string(id_) + " is not ready");
  SERVESIM_CHECK(fabric_ != nullptr, ErrorCode::kInvalidArgument,
                 "KV handoff needs a fabric");
  pending_handoffs_.push_back(handoff);
  try_handoffs();
}

void TaskExecutor::try_handoffs() {
  while (!pending_handoffs_.empty()) {
    const Handoff h = pending_handoffs_.front();
    const int64_t prompt = h.request->prompt_len();
    const int64_t need = blocks_for(prompt + 1);
    if (!can_alloc(need)) {
      return;
    }
    pending_handoffs_.erase(pending_handoffs_.begin());
    Sequence s;
    s.id = next_seq_++;
    s.request = h.request;
    s.metrics_handle = h.metrics_handle;
    s.role = TaskKind::kDecode;
    s.phase = Phase::kReceiving;
    s.prefill_target = prompt;
    s.kv_len = prompt;
    s.generated = 1;
    s.admitted_once = true;
    s.blocks = rtc_.alloc_blocks(need);
    const int64_t id = s.id;
    seqs_.emplace(id, std::move(s));
    fabric_->transfer(
        group_, h.prefill_te->npu_endpoint(), npu_ep_,
        handoff_bytes(config_, prompt),
        [this, id, h](const distflow::TransferTicket&) {
          h.prefill_te->handoff_done(h.prefill_seq);
          auto it = seqs_.find(id);
          if (it == seqs_.end()) {
            return;
          }
          it->second.phase = Phase::kRunning;
          running_.insert(id);
          if (hooks_.on_handoff_received) {
            hooks_.on_handoff_received(view(it->second));
          }
          kick();
        });
  }
}

void TaskExecutor::kick() {
  if (busy_ || lifecycle_ != Lifecycle::kReady) {
    return;
  }
  try_handoffs();
  IterationPlan plan = plan_iteration();
  if (!plan.empty()) {
    execute_iteration(std::move(plan));
  }
}

void TaskExecutor::fail() {
  lifecycle_ = Lifecycle::kFailed;
  const Micros t = sim_.now();
  for (auto& [id, s] : seqs_) {
    if (hooks_.on_rejected) {
      hooks_.on_rejected(view(s), t);
    }
  }
  for (const auto& h : pending_handoffs_) {
    if (hooks_.on_rejected) {
      hooks_.on_rejected(
          SeqView{-1, h.request, h.metrics_handle, TaskKind::kDecode}, t);
    }
  }
  seqs_.clear();
  waiting_.clear();
  swapped_.clear();
  running_.clear();
  pending_handoffs_.clear();
  busy_ = false;
}

int64_t TaskExecutor::queued_tokens() const {
  int64_t n = 0;
  for (const auto& [id, s] : seqs_) {
    if (s.phase != Phase::kHandingOff) {
      n += std::max<int64_t>(0, s.prefill_target - s.kv_len);
    }
  }
  for (const auto& h : pending_handoffs_) {
    n += h.request->prompt_len();
  }
  return n;
}

int64_t TaskExecutor::running_tokens() const {
  int64_t n = 0;
  for (const auto& [id, s] : seqs_) {
    if (s.phase == Phase::kRunning || s.phase == Phase::kReceiving ||
        s.phase == Phase::kSwapped || s.phase == Phase::kSwappingIn) {
      n += s.kv_len;
    }
  }
  return n;
}

bool handoff_kv(TaskExecutor& prefill_te, TaskExecutor& decode_te,
                const workload::Request& request, size_t metrics_handle,
                int64_t prefill_seq) {
  const size_t before = decode_te.pending_handoffs();
  decode_te.request_handoff(
      Handoff{&request, metrics_handle, prefill_seq, &prefill_te});
  return decode_te.pending_handoffs() <= before;
}

}  // namespace servesim::engine
