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

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "servesim/common/error.h"
#include "servesim/distflow/fabric.h"
#include "servesim/sim/simulator.h"
#include "servesim/workload/request.h"

namespace servesim::rtc {

enum class Tier : int32_t { kNpu = 0, kDram = 1 };

std::string_view tier_name(Tier tier);

using BlockId = int64_t;

struct RtcConfig {
  int32_t block_size = 16;
  int64_t npu_capacity = 8192;  // blocks
  int64_t dram_capacity = 0;    // blocks
  int64_t block_bytes = 16 * 160 * 1024;
};

void validate(const RtcConfig& config);

// Read-only view of one block.
struct Block {
  BlockId id = -1;
  Tier tier = Tier::kNpu;
  TokenSeq token_span;  // empty unless the block is indexed
  int32_t ref_count = 0;
  Micros last_use = 0;
  bool in_use = false;
  bool indexed = false;
};

struct MatchResult {
  int64_t matched_token_count = 0;
  std::vector<std::pair<BlockId, Tier>> blocks;
  bool fully_on_npu = true;

  std::vector<BlockId> block_ids() const;
  int64_t off_npu_blocks() const;
};

enum class PopulateStatus : int32_t { kPending, kDone, kFailed };

struct PopulateTicket {
  int64_t ticket_id = -1;
  PopulateStatus status = PopulateStatus::kPending;
  Micros completes_at = 0;
};

struct TierUsage {
  int64_t capacity = 0;
  int64_t free = 0;
  int64_t allocated = 0;  // referenced, or owned by a sequence
  int64_t cached = 0;     // indexed with no references
};

// Relational tensor cache: a block table over two tiers plus a block
// granular radix index of token prefixes and an ID index of explicit
// contexts. Only whole blocks are indexed, so matches are block aligned.
//
// Reference counting: alloc/append/copy hand out blocks with one reference.
// release() drops a reference; an unreferenced indexed block stays cached and
// becomes evictable, anything else returns to the free pool. free() drops a
// reference and, when none remain, unindexes the block and returns it
// immediately.
class RelationalTensorCache {
 public:
  using PrefixListener = std::function<void(std::span<const TokenId>)>;
  using PopulateCallback = std::function<void(const PopulateTicket&)>;

  RelationalTensorCache(const RtcConfig& config, sim::Simulator& sim);
  RelationalTensorCache(const RelationalTensorCache&) = delete;
  RelationalTensorCache& operator=(const RelationalTensorCache&) = delete;

  const RtcConfig& config() const { return config_; }

  // Populate moves bytes DRAM->NPU over the fabric when attached; otherwise
  // over an uncontended link described by `pcie`.
  void attach_fabric(distflow::Fabric* fabric, distflow::ChannelGroup group,
                     distflow::EndpointId dram_ep, distflow::EndpointId npu_ep);
  void set_pcie(const distflow::LinkSpec& pcie) { pcie_ = pcie; }
  const distflow::LinkSpec& pcie() const { return pcie_; }
  // Uncontended DRAM->NPU time for n blocks.
  Micros estimate_fetch(int64_t blocks) const;

  // Called with the full token path of every prefix node that appears in or
  // disappears from the radix index.
  void set_prefix_listeners(PrefixListener on_added,
                            PrefixListener on_removed);

  MatchResult match_by_prefix_tokens(std::span<const TokenId> tokens);
  MatchResult match_by_id(const std::string& context_id);

  // Throws Error(kInsufficientNpuMemory).
  PopulateTicket populate(const MatchResult& result,
                          PopulateCallback on_done = {});
  // Throws Error(kUnknownTicket).
  PopulateStatus query_populate(int64_t ticket_id) const;
  const PopulateTicket& populate_ticket(int64_t ticket_id) const;

  // Throws Error(kOutOfMemory). Evicts LRU cached leaves as needed.
  std::vector<BlockId> alloc_blocks(int64_t n);
  BlockId append_block(int64_t seq_id);
  // Duplicates placement on dst_tier; the source stays until freed. Indexed
  // sources gain a cached replica; others hand back an owned block.
  std::vector<BlockId> copy(std::span<const BlockId> block_ids, Tier dst_tier);
  void free(std::span<const BlockId> block_ids);
  void release(std::span<const BlockId> block_ids);
  void acquire(std::span<const BlockId> block_ids);

  // block_ids[i] holds tokens [i*block_size, (i+1)*block_size). Only whole
  // blocks are indexed. Throws Error(kInvalidCoverage).
  void commit_prefix(std::span<const TokenId> tokens,
                     std::span<const BlockId> block_ids,
                     const std::optional<std::string>& context_id = {});

  Block block(BlockId id) const;
  TierUsage usage(Tier tier) const;
  int64_t free_blocks(Tier tier = Tier::kNpu) const;
  // Blocks obtainable through eviction right now, without side effects.
  int64_t reclaimable_blocks(Tier tier = Tier::kNpu) const;
  // free + reclaimable >= n, usually without walking the tree.
  bool can_allocate(int64_t n, Tier tier = Tier::kNpu) const;
  int64_t indexed_nodes() const { return static_cast<int64_t>(nodes_.size()); }
  int64_t evictions() const { return evictions_; }
  // last_use of each evicted node, in eviction order.
  const std::vector<Micros>& eviction_log() const { return eviction_log_; }
  // last_use of every current eviction candidate on the tier.
  std::vector<Micros> eviction_candidates(Tier tier) const;

  // Token paths of every indexed node, depth-first, for audits.
  std::vector<TokenSeq> indexed_prefixes() const;
  nlohmann::json dump_tree() const;

 private:
  using NodeId = int64_t;
  static constexpr NodeId kRoot = -1;
  using LruKey = std::pair<Micros, NodeId>;

  struct Node {
    NodeId id = 0;
    NodeId parent = kRoot;
    TokenSeq span;
    std::map<TokenSeq, NodeId> children;
    std::array<std::optional<BlockId>, 2> replica;
    std::array<std::optional<LruKey>, 2> lru;
    std::array<bool, 2> unreferenced{};  // counted in unreferenced_
    std::vector<std::string> contexts;
    Micros last_use = 0;
  };
  struct BlockState {
    Tier tier = Tier::kNpu;
    bool in_use = false;
    int32_t ref_count = 0;
    NodeId node = kRoot;  // kRoot when not indexed
    int64_t seq_id = -1;
    Micros last_use = 0;
  };
  struct PendingPopulate {
    PopulateTicket ticket;
    std::vector<std::pair<NodeId, BlockId>> fills;
    std::vector<BlockId> held;
    PopulateCallback on_done;
  };

  static size_t tier_index(Tier t) { return static_cast<size_t>(t); }
  Micros now() const { return sim_.now(); }
  BlockState& state(BlockId id);
  const BlockState& state(BlockId id) const;

  std::optional<BlockId> take_free(Tier tier);
  std::vector<BlockId> allocate(Tier tier, int64_t n, ErrorCode on_fail);
  void return_to_pool(BlockId id);
  bool evict_one(Tier tier);

  const std::map<TokenSeq, NodeId>& children_of(NodeId id) const;
  std::map<TokenSeq, NodeId>& children_of(NodeId id);
  NodeId create_node(NodeId parent, TokenSeq span);
  void touch(Node& node);
  void refresh_lru(NodeId id);
  bool is_candidate(const Node& node, Tier tier) const;
  void drop_replica(Node& node, Tier tier);
  void remove_subtree(NodeId id);
  void unpin_context(const std::string& context_id);
  TokenSeq path_tokens(NodeId id) const;
  MatchResult result_for(const std::vector<NodeId>& path) const;
  void finish_populate(int64_t ticket_id);

  RtcConfig config_;
  sim::Simulator& sim_;
  distflow::LinkSpec pcie_{distflow::LinkKind::kPcie, 32.0 * distflow::kGiB,
                           10};
  distflow::Fabric* fabric_ = nullptr;
  distflow::ChannelGroup group_;
  distflow::EndpointId dram_ep_ = -1;
  distflow::EndpointId npu_ep_ = -1;

  std::vector<BlockState> blocks_;
  std::array<std::vector<BlockId>, 2> free_lists_;
  std::map<NodeId, Node> nodes_;
  std::map<TokenSeq, NodeId> root_children_;
  NodeId next_node_ = 0;
  std::array<std::set<LruKey>, 2> lru_;
  // Indexed replicas with no reference and no pin; bounds reclaimable.
  std::array<int64_t, 2> unreferenced_{};
  std::map<std::string, std::vector<NodeId>> contexts_;
  std::map<int64_t, PendingPopulate> pending_;
  std::map<int64_t, PopulateTicket> tickets_;
  int64_t next_ticket_ = 0;
  int64_t evictions_ = 0;
  std::vector<Micros> eviction_log_;
  PrefixListener on_added_;
  PrefixListener on_removed_;
};

}  // namespace servesim::rtc
