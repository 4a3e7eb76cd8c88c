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
#include <tuple>
#include <vector>

#include <json.hpp>

#include "servesim/distflow/fabric.h"
#include "servesim/rtc/rtc.h"
#include "servesim/sim/simulator.h"
#include "servesim/workload/request.h"

namespace servesim::engine {

enum class EngineMode : int32_t { kPrefillOnly, kDecodeOnly, kColocated };

std::string_view engine_mode_name(EngineMode mode);
EngineMode engine_mode_from_name(std::string_view name);

enum class Lifecycle : int32_t { kPreWarmed, kLoading, kReady, kFailed };

enum class KvTransferMode : int32_t { kByRequest, kByLayer };

// Linear cost model. Coefficients are given at cost_ref_tp; a_p, a_d and c_d
// scale with cost_ref_tp / tp_degree, the fixed terms do not.
struct CostModel {
  double a_p = 120.0;  // us per prefill token
  double b_p = 4000.0;  // us per iteration with prefill chunks
  double a_d = 100.0;   // us per decode sequence
  double c_d = 1.6;     // us per KV block touched by decode
  double b_d = 10000.0;  // us per iteration with decode members
};

struct EngineConfig {
  EngineMode mode = EngineMode::kColocated;
  int32_t tp_degree = 4;
  int32_t cost_ref_tp = 4;
  CostModel cost;
  int64_t npu_blocks_capacity = 8192;
  int64_t dram_blocks_capacity = 0;
  int32_t block_size = 16;
  int64_t kv_bytes_per_token = 160 * 1024;
  int64_t chunk_size = 512;
  int64_t max_batch_tokens = 2048;
  Micros sched_overhead = 0;
  bool async_sched = true;
  bool swap_preemption = false;
  // Copy committed prompt blocks to DRAM in the background.
  bool offload_prefix_to_dram = false;
  KvTransferMode kv_transfer = KvTransferMode::kByRequest;
  // Fraction of the by-request transfer left exposed in by-layer mode.
  double layer_overlap = 1.0;

  // Coefficients after TP scaling.
  CostModel effective_cost() const;
  rtc::RtcConfig rtc_config() const;
};

void validate(const EngineConfig& config);
EngineConfig engine_config_from_json(const nlohmann::json& j,
                                     const EngineConfig& base = {});
nlohmann::json engine_config_to_json(const EngineConfig& config);

struct IterationPlan {
  std::vector<int64_t> decode_members;  // sequence ids, one token each
  std::vector<std::pair<int64_t, int64_t>> prefill_chunks;  // (seq, tokens)
  int64_t kv_blocks_touched = 0;
  double duration = 0.0;  // us

  bool empty() const {
    return decode_members.empty() && prefill_chunks.empty();
  }
  int64_t prefill_tokens() const;
  int64_t batch_tokens() const {
    return static_cast<int64_t>(decode_members.size()) + prefill_tokens();
  }
};

// Closed form of the cost model for a plan shape.
double iteration_duration(const CostModel& cost, int64_t decode_members,
                          int64_t prefill_tokens, int64_t prefill_chunks,
                          int64_t kv_blocks_touched);
// Wall time of one iteration given its model duration.
double iteration_wall_time(double duration, Micros sched_overhead,
                           bool async_sched);

struct IterationRecord {
  Micros start = 0;
  Micros end = 0;
  int64_t decode_members = 0;
  int64_t prefill_tokens = 0;
  double duration = 0.0;
};

// Per-request view handed to hooks.
struct SeqView {
  int64_t seq_id = -1;
  const workload::Request* request = nullptr;
  size_t metrics_handle = 0;
  workload::TaskKind role = workload::TaskKind::kColocated;
};

struct EngineHooks {
  std::function<void(const SeqView&, int64_t cached_tokens)> on_admitted;
  std::function<void(const SeqView&, Micros t)> on_token;
  std::function<void(const SeqView&, Micros t)> on_finished;
  std::function<void(const SeqView&, Micros t)> on_rejected;
  // Prefill TE: prompt done and more tokens remain. The handler must start a
  // handoff; the prefill blocks stay held until handoff_done().
  std::function<void(const SeqView&)> on_prefill_done;
  // Decode TE: the KV transfer of a handoff landed.
  std::function<void(const SeqView&)> on_handoff_received;
  // Fired whenever NPU blocks go back to the pool or the cache.
  std::function<void()> on_blocks_freed;
};

// A pending prefill->decode KV handoff as seen by the decode TE.
struct Handoff {
  const workload::Request* request = nullptr;
  size_t metrics_handle = 0;
  int64_t prefill_seq = -1;
  class TaskExecutor* prefill_te = nullptr;
};

// Simulated serving engine: continuous batching with chunked prefill,
// decode-first admission and recompute (or swap) preemption, advanced only by
// simulator events.
class TaskExecutor {
 public:
  TaskExecutor(TeId id, const EngineConfig& config, sim::Simulator& sim);
  TaskExecutor(const TaskExecutor&) = delete;
  TaskExecutor& operator=(const TaskExecutor&) = delete;

  TeId id() const { return id_; }
  const EngineConfig& config() const { return config_; }
  EngineMode mode() const { return config_.mode; }
  rtc::RelationalTensorCache& rtc() { return rtc_; }
  const rtc::RelationalTensorCache& rtc() const { return rtc_; }
  void set_hooks(EngineHooks hooks) { hooks_ = std::move(hooks); }

  Lifecycle lifecycle() const { return lifecycle_; }
  void set_lifecycle(Lifecycle l) { lifecycle_ = l; }

  // npu_ep is this TE's NPU endpoint; dram_ep the host DRAM endpoint.
  void attach_fabric(distflow::Fabric* fabric,
                     const distflow::ChannelGroup& group,
                     distflow::EndpointId npu_ep,
                     distflow::EndpointId dram_ep);
  distflow::EndpointId npu_endpoint() const { return npu_ep_; }

  // Throws Error(kNotReady) unless Ready. Prompts that cannot fit in NPU
  // memory at all are rejected through on_rejected.
  void enqueue(const workload::Request& request, size_t metrics_handle,
               workload::TaskKind role = workload::TaskKind::kColocated);

  // Decode side of a disaggregated job. Reserves blocks and starts the KV
  // transfer, or queues until blocks free up.
  void request_handoff(const Handoff& handoff);
  // Prefill side: the KV transfer finished; drop the held blocks.
  void handoff_done(int64_t seq_id);

  // Builds the next plan. Reserves the blocks the plan will write and may
  // preempt sequences; execute_iteration must follow.
  IterationPlan plan_iteration();
  // Schedules the completion event of a plan and returns its wall time.
  Micros execute_iteration(IterationPlan plan);

  // Wall time multiplier, e.g. while serving as a fork source.
  void set_interference(double factor) { interference_ = factor; }
  double interference() const { return interference_; }

  // Drops all work and reports it rejected.
  void fail();

  int64_t queued_tokens() const;
  int64_t running_tokens() const;
  int64_t load() const { return queued_tokens() + running_tokens(); }
  bool busy() const { return busy_; }
  size_t waiting() const { return waiting_.size(); }
  size_t running() const { return running_.size(); }
  size_t pending_handoffs() const { return pending_handoffs_.size(); }
  int64_t preemptions() const { return preemptions_; }
  int64_t iterations() const { return iterations_; }
  Micros busy_time() const { return busy_time_; }

  void set_record_iterations(bool on) { record_iterations_ = on; }
  const std::vector<IterationRecord>& iteration_log() const {
    return iteration_log_;
  }

  // Reuse-benefit test: fetching off-NPU cached blocks must beat recompute.
  bool reuse_beneficial(int64_t off_npu_blocks, int64_t cached_tokens) const;

 private:
  enum class Phase : int32_t {
    kParked,      // waiting for a populate
    kWaiting,     // not admitted
    kRunning,     // admitted: prefilling or decoding
    kSwapped,     // preempted to DRAM
    kSwappingIn,  // DRAM -> NPU in flight
    kHandingOff,  // prefill done, blocks held for transfer
    kReceiving,   // decode side, KV transfer in flight
  };
  struct Sequence {
    int64_t id = -1;
    const workload::Request* request = nullptr;
    size_t metrics_handle = 0;
    workload::TaskKind role = workload::TaskKind::kColocated;
    Phase phase = Phase::kWaiting;
    int64_t prefill_target = 0;  // KV tokens needed before decoding
    int64_t kv_len = 0;
    int64_t generated = 0;
    int64_t cached_tokens = 0;
    bool admitted_once = false;
    std::vector<rtc::BlockId> blocks;
    std::vector<rtc::BlockId> swap_blocks;
  };
  using QueueKey = std::tuple<int32_t, Micros, int64_t>;

  SeqView view(const Sequence& s) const;
  QueueKey key(const Sequence& s) const;
  int64_t blocks_for(int64_t tokens) const;
  bool can_alloc(int64_t n) const;
  void admit(Sequence& s);
  bool grow(Sequence& s, int64_t tokens);
  void preempt(Sequence& s);
  void release_blocks(Sequence& s);
  void on_iteration_done(const IterationPlan& plan, Micros start);
  void on_prefill_complete(Sequence& s, Micros t);
  void finish(Sequence& s, Micros t);
  void commit(Sequence& s);
  void make_ready(int64_t seq_id);
  void try_handoffs();
  void try_swap_in();
  void kick();
  bool is_decoding(const Sequence& s) const;

  TeId id_;
  EngineConfig config_;
  CostModel cost_;
  sim::Simulator& sim_;
  rtc::RelationalTensorCache rtc_;
  EngineHooks hooks_;
  Lifecycle lifecycle_ = Lifecycle::kReady;

  distflow::Fabric* fabric_ = nullptr;
  distflow::ChannelGroup group_;
  distflow::EndpointId npu_ep_ = -1;

  std::map<int64_t, Sequence> seqs_;
  std::set<QueueKey> waiting_;
  std::set<QueueKey> swapped_;
  std::set<int64_t> running_;
  std::vector<Handoff> pending_handoffs_;
  int64_t next_seq_ = 0;
  bool busy_ = false;
  double interference_ = 1.0;

  int64_t preemptions_ = 0;
  int64_t iterations_ = 0;
  Micros busy_time_ = 0;
  bool record_iterations_ = false;
  std::vector<IterationRecord> iteration_log_;
};

// Starts moving a finished prefill's KV to the decode TE. Returns false when
// the decode TE is out of blocks; the handoff then waits for a free event.
bool handoff_kv(TaskExecutor& prefill_te, TaskExecutor& decode_te,
                const workload::Request& request, size_t metrics_handle,
                int64_t prefill_seq);

// KV bytes moved for a prompt, after the by-layer overlap discount.
int64_t handoff_bytes(const EngineConfig& decode_config, int64_t prompt_tokens);

}  // namespace servesim::engine
