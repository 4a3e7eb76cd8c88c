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

#include "servesim/rtc/rtc.h"

#include <algorithm>
#include <cassert>
#include <functional>

#include "servesim/common/error.h"

namespace servesim::rtc {

std::string_view tier_name(Tier tier) {
  return tier == Tier::kNpu ? "npu" : "dram";
}

void validate(const RtcConfig& config) {
  SERVESIM_CHECK(config.block_size >= 1, ErrorCode::kConfigError,
                 "block_size must be >= 1");
  SERVESIM_CHECK(config.npu_capacity >= 0 && config.dram_capacity >= 0,
                 ErrorCode::kConfigError, "capacities must be >= 0");
  SERVESIM_CHECK(config.block_bytes > 0, ErrorCode::kConfigError,
                 "block_bytes must be positive");
}

std::vector<BlockId> MatchResult::block_ids() const {
  std::vector<BlockId> ids;
  ids.reserve(blocks.size());
  for (const auto& [id, tier] : blocks) {
    ids.push_back(id);
  }
  return ids;
}

int64_t MatchResult::off_npu_blocks() const {
  return std::count_if(blocks.begin(), blocks.end(), [](const auto& b) {
    return b.second != Tier::kNpu;
  });
}

RelationalTensorCache::RelationalTensorCache(const RtcConfig& config,
                                             sim::Simulator& sim)
    : config_(config), sim_(sim) {
  validate(config_);
  const int64_t total = config_.npu_capacity + config_.dram_capacity;
  blocks_.resize(static_cast<size_t>(total));
  for (int64_t i = 0; i < total; ++i) {
    blocks_[i].tier = i < config_.npu_capacity ? Tier::kNpu : Tier::kDram;
  }
  // Stacks pop from the back; lowest ids come out first.
  for (int64_t i = config_.npu_capacity - 1; i >= 0; --i) {
    free_lists_[0].push_back(i);
  }
  for (int64_t i = total - 1; i >= config_.npu_capacity; --i) {
    free_lists_[1].push_back(i);
  }
}

void RelationalTensorCache::attach_fabric(distflow::Fabric* fabric,
                                          distflow::ChannelGroup group,
                                          distflow::EndpointId dram_ep,
                                          distflow::EndpointId npu_ep) {
  fabric_ = fabric;
  group_ = std::move(group);
  dram_ep_ = dram_ep;
  npu_ep_ = npu_ep;
  if (fabric_ != nullptr) {
    pcie_ = fabric_->links().get(
        fabric_->topology().link_between(dram_ep_, npu_ep_));
  }
}

Micros RelationalTensorCache::estimate_fetch(int64_t blocks) const {
  if (blocks <= 0) {
    return 0;
  }
  const double bytes = static_cast<double>(blocks * config_.block_bytes);
  return pcie_.base_latency + ceil_micros(bytes / pcie_.bandwidth * 1e6);
}

void RelationalTensorCache::set_prefix_listeners(PrefixListener on_added,
                                                 PrefixListener on_removed) {
  on_added_ = std::move(on_added);
  on_removed_ = std::move(on_removed);
}

RelationalTensorCache::BlockState& RelationalTensorCache::state(BlockId id) {
  SERVESIM_CHECK(id >= 0 && id < static_cast<BlockId>(blocks_.size()),
                 ErrorCode::kUnknownBlock, "block " + std::to_string(id));
  return blocks_[static_cast<size_t>(id)];
}

const RelationalTensorCache::BlockState& RelationalTensorCache::state(
    BlockId id) const {
  SERVESIM_CHECK(id >= 0 && id < static_cast<BlockId>(blocks_.size()),
                 ErrorCode::kUnknownBlock, "block " + std::to_string(id));
  return blocks_[static_cast<size_t>(id)];
}

// ---------------------------------------------------------------------------
// Index maintenance
// ---------------------------------------------------------------------------

const std::map<TokenSeq, RelationalTensorCache::NodeId>&
RelationalTensorCache::children_of(NodeId id) const {
  return id == kRoot ? root_children_ : nodes_.at(id).children;
}

std::map<TokenSeq, RelationalTensorCache::NodeId>&
RelationalTensorCache::children_of(NodeId id) {
  return id == kRoot ? root_children_ : nodes_.at(id).children;
}

RelationalTensorCache::NodeId RelationalTensorCache::create_node(
    NodeId parent, TokenSeq span) {
  const NodeId id = next_node_++;
  Node node;
  node.id = id;
  node.parent = parent;
  node.span = span;
  node.last_use = now();
  nodes_.emplace(id, std::move(node));
  children_of(parent).emplace(std::move(span), id);
  if (parent != kRoot) {
    refresh_lru(parent);
  }
  return id;
}

void RelationalTensorCache::touch(Node& node) {
  node.last_use = now();
  for (auto& r : node.replica) {
    if (r) {
      blocks_[static_cast<size_t>(*r)].last_use = node.last_use;
    }
  }
  refresh_lru(node.id);
}

bool RelationalTensorCache::is_candidate(const Node& node, Tier tier) const {
  const auto& r = node.replica[tier_index(tier)];
  if (!r || blocks_[static_cast<size_t>(*r)].ref_count > 0 ||
      !node.contexts.empty()) {
    return false;
  }
  const auto& other = node.replica[1 - tier_index(tier)];
  return other.has_value() || node.children.empty();
}

void RelationalTensorCache::refresh_lru(NodeId id) {
  auto& node = nodes_.at(id);
  for (Tier tier : {Tier::kNpu, Tier::kDram}) {
    const size_t t = tier_index(tier);
    if (node.lru[t]) {
      lru_[t].erase(*node.lru[t]);
      node.lru[t].reset();
    }
    if (is_candidate(node, tier)) {
      node.lru[t] = LruKey{node.last_use, id};
      lru_[t].insert(*node.lru[t]);
    }
    const bool unref = node.replica[t] &&
                       blocks_[static_cast<size_t>(*node.replica[t])]
                               .ref_count == 0 &&
                       node.contexts.empty();
    if (unref != node.unreferenced[t]) {
      unreferenced_[t] += unref ? 1 : -1;
      node.unreferenced[t] = unref;
    }
  }
}

TokenSeq RelationalTensorCache::path_tokens(NodeId id) const {
  std::vector<NodeId> chain;
  for (NodeId cur = id; cur != kRoot; cur = nodes_.at(cur).parent) {
    chain.push_back(cur);
  }
  TokenSeq out;
  out.reserve(chain.size() * static_cast<size_t>(config_.block_size));
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    const auto& span = nodes_.at(*it).span;
    out.insert(out.end(), span.begin(), span.end());
  }
  return out;
}

void RelationalTensorCache::drop_replica(Node& node, Tier tier) {
  const size_t t = tier_index(tier);
  if (!node.replica[t]) {
    return;
  }
  const BlockId b = *node.replica[t];
  node.replica[t].reset();
  auto& st = blocks_[static_cast<size_t>(b)];
  st.node = kRoot;
  if (st.ref_count == 0 && st.in_use) {
    return_to_pool(b);
  }
  if (!node.replica[0] && !node.replica[1]) {
    remove_subtree(node.id);
  } else {
    refresh_lru(node.id);
  }
}

void RelationalTensorCache::remove_subtree(NodeId id) {
  std::vector<NodeId> kids;
  for (const auto& [span, child] : nodes_.at(id).children) {
    kids.push_back(child);
  }
  for (NodeId child : kids) {
    remove_subtree(child);
  }
  if (on_removed_) {
    on_removed_(path_tokens(id));
  }
  auto& node = nodes_.at(id);
  for (size_t t = 0; t < 2; ++t) {
    if (node.lru[t]) {
      lru_[t].erase(*node.lru[t]);
    }
    if (node.unreferenced[t]) {
      --unreferenced_[t];
    }
    if (node.replica[t]) {
      auto& st = blocks_[static_cast<size_t>(*node.replica[t])];
      st.node = kRoot;
      if (st.ref_count == 0 && st.in_use) {
        return_to_pool(*node.replica[t]);
      }
    }
  }
  for (const auto& ctx : node.contexts) {
    auto it = contexts_.find(ctx);
    if (it == contexts_.end()) {
      continue;
    }
    auto& path = it->second;
    auto pos = std::find(path.begin(), path.end(), id);
    path.erase(pos, path.end());
    if (path.empty()) {
      contexts_.erase(it);
    }
  }
  const NodeId parent = node.parent;
  children_of(parent).erase(node.span);
  nodes_.erase(id);
  if (parent != kRoot) {
    refresh_lru(parent);
  }
}

void RelationalTensorCache::unpin_context(const std::string& context_id) {
  auto it = contexts_.find(context_id);
  if (it == contexts_.end()) {
    return;
  }
  const auto path = it->second;
  contexts_.erase(it);
  for (NodeId id : path) {
    auto& ctxs = nodes_.at(id).contexts;
    ctxs.erase(std::remove(ctxs.begin(), ctxs.end(), context_id), ctxs.end());
    refresh_lru(id);
  }
}

// ---------------------------------------------------------------------------
// Block pool
// ---------------------------------------------------------------------------

std::optional<BlockId> RelationalTensorCache::take_free(Tier tier) {
  auto& fl = free_lists_[tier_index(tier)];
  if (fl.empty()) {
    return std::nullopt;
  }
  const BlockId id = fl.back();
  fl.pop_back();
  return id;
}

void RelationalTensorCache::return_to_pool(BlockId id) {
  auto& st = blocks_[static_cast<size_t>(id)];
  assert(st.in_use && st.node == kRoot);
  st.in_use = false;
  st.ref_count = 0;
  st.seq_id = -1;
  free_lists_[tier_index(st.tier)].push_back(id);
}

bool RelationalTensorCache::evict_one(Tier tier) {
  auto& set = lru_[tier_index(tier)];
  if (set.empty()) {
    return false;
  }
  const auto [last_use, id] = *set.begin();
  eviction_log_.push_back(last_use);
  ++evictions_;
  drop_replica(nodes_.at(id), tier);
  return true;
}

std::vector<BlockId> RelationalTensorCache::allocate(Tier tier, int64_t n,
                                                     ErrorCode on_fail) {
  SERVESIM_CHECK(n >= 1, ErrorCode::kInvalidArgument, "allocate n >= 1");
  const auto have = static_cast<int64_t>(free_lists_[tier_index(tier)].size());
  if (have < n) {
    SERVESIM_CHECK(can_allocate(n, tier), on_fail,
                   "need " + std::to_string(n) + " " +
                       std::string(tier_name(tier)) + " blocks, " +
                       std::to_string(have) + " free");
    while (static_cast<int64_t>(free_lists_[tier_index(tier)].size()) < n) {
      const bool evicted = evict_one(tier);
      assert(evicted);
      (void)evicted;
    }
  }
  std::vector<BlockId> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const BlockId id = *take_free(tier);
    auto& st = blocks_[static_cast<size_t>(id)];
    st.in_use = true;
    st.ref_count = 1;
    st.node = kRoot;
    st.seq_id = -1;
    st.last_use = now();
    out.push_back(id);
  }
  return out;
}

int64_t RelationalTensorCache::reclaimable_blocks(Tier tier) const {
  const size_t t = tier_index(tier);
  // Iterative post-order over the forest.
  struct Frame {
    NodeId id;
    bool expanded;
  };
  std::map<NodeId, bool> removable_flag;
  int64_t total = 0;
  std::vector<Frame> stack;
  for (const auto& [span, id] : root_children_) {
    stack.push_back({id, false});
  }
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const Node& node = nodes_.at(f.id);
    if (!f.expanded) {
      stack.push_back({f.id, true});
      for (const auto& [span, child] : node.children) {
        stack.push_back({child, false});
      }
      continue;
    }
    bool kids_removable = true;
    for (const auto& [span, child] : node.children) {
      kids_removable = kids_removable && removable_flag.at(child);
    }
    const auto& mine = node.replica[t];
    const bool free_replica =
        mine && blocks_[static_cast<size_t>(*mine)].ref_count == 0 &&
        node.contexts.empty();
    const bool other = node.replica[1 - t].has_value();
    if (free_replica && (other || kids_removable)) {
      ++total;
    }
    removable_flag[f.id] = free_replica && !other && kids_removable;
  }
  return total;
}

bool RelationalTensorCache::can_allocate(int64_t n, Tier tier) const {
  const size_t t = tier_index(tier);
  const auto have = static_cast<int64_t>(free_lists_[t].size());
  // Evicting a candidate never disqualifies another, so candidates are a
  // lower bound; unreferenced replicas are an upper bound.
  if (have + static_cast<int64_t>(lru_[t].size()) >= n) {
    return true;
  }
  if (have + unreferenced_[t] < n) {
    return false;
  }
  return have + reclaimable_blocks(tier) >= n;
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

MatchResult RelationalTensorCache::result_for(
    const std::vector<NodeId>& path) const {
  MatchResult r;
  for (NodeId id : path) {
    const Node& node = nodes_.at(id);
    if (node.replica[0]) {
      r.blocks.emplace_back(*node.replica[0], Tier::kNpu);
    } else {
      r.blocks.emplace_back(*node.replica[1], Tier::kDram);
      r.fully_on_npu = false;
    }
  }
  r.matched_token_count =
      static_cast<int64_t>(path.size()) * config_.block_size;
  return r;
}

MatchResult RelationalTensorCache::match_by_prefix_tokens(
    std::span<const TokenId> tokens) {
  const auto bs = static_cast<size_t>(config_.block_size);
  std::vector<NodeId> path;
  NodeId cur = kRoot;
  TokenSeq key(bs);
  for (size_t off = 0; off + bs <= tokens.size(); off += bs) {
    std::copy(tokens.begin() + off, tokens.begin() + off + bs, key.begin());
    const auto& kids = children_of(cur);
    auto it = kids.find(key);
    if (it == kids.end()) {
      break;
    }
    cur = it->second;
    path.push_back(cur);
  }
  for (NodeId id : path) {
    touch(nodes_.at(id));
  }
  return result_for(path);
}

MatchResult RelationalTensorCache::match_by_id(const std::string& context_id) {
  auto it = contexts_.find(context_id);
  if (it == contexts_.end()) {
    return {};
  }
  for (NodeId id : it->second) {
    touch(nodes_.at(id));
  }
  return result_for(it->second);
}

PopulateTicket RelationalTensorCache::populate(const MatchResult& result,
                                               PopulateCallback on_done) {
  std::vector<NodeId> fill_nodes;
  std::vector<BlockId> held;
  for (const auto& [id, tier] : result.blocks) {
    const auto& st = state(id);
    SERVESIM_CHECK(st.in_use && st.node != kRoot, ErrorCode::kUnknownBlock,
                   "populate of unindexed block " + std::to_string(id));
    held.push_back(id);
    if (!nodes_.at(st.node).replica[0]) {
      fill_nodes.push_back(st.node);
    }
  }
  PopulateTicket ticket;
  ticket.ticket_id = next_ticket_++;
  ticket.completes_at = now();
  if (fill_nodes.empty()) {
    ticket.status = PopulateStatus::kDone;
    tickets_[ticket.ticket_id] = ticket;
    if (on_done) {
      on_done(ticket);
    }
    return ticket;
  }
  acquire(held);
  const auto k = static_cast<int64_t>(fill_nodes.size());
  if (!can_allocate(k, Tier::kNpu)) {
    release(held);
    throw Error(ErrorCode::kInsufficientNpuMemory,
                "populate needs " + std::to_string(k) + " NPU blocks");
  }
  const auto fresh = allocate(Tier::kNpu, k, ErrorCode::kInsufficientNpuMemory);

  PendingPopulate pending;
  pending.held = std::move(held);
  pending.on_done = std::move(on_done);
  for (int64_t i = 0; i < k; ++i) {
    pending.fills.emplace_back(fill_nodes[i], fresh[i]);
  }
  const int64_t id = ticket.ticket_id;
  const int64_t bytes = k * config_.block_bytes;
  if (fabric_ != nullptr) {
    const auto tid = fabric_->transfer(
        group_, dram_ep_, npu_ep_, bytes,
        [this, id](const distflow::TransferTicket&) { finish_populate(id); });
    ticket.completes_at = fabric_->ticket(tid).completes_at;
  } else {
    ticket.completes_at = now() + estimate_fetch(k);
    sim_.schedule(ticket.completes_at, sim::EventKind::kPopulateComplete,
                  [this, id] { finish_populate(id); });
  }
  pending.ticket = ticket;
  tickets_[id] = ticket;
  pending_.emplace(id, std::move(pending));
  return ticket;
}

void RelationalTensorCache::finish_populate(int64_t ticket_id) {
  auto node_handle = pending_.extract(ticket_id);
  auto& p = node_handle.mapped();
  for (const auto& [node_id, block] : p.fills) {
    auto it = nodes_.find(node_id);
    if (it != nodes_.end() && !it->second.replica[0]) {
      it->second.replica[0] = block;
      blocks_[static_cast<size_t>(block)].node = node_id;
      refresh_lru(node_id);
    }
    const BlockId one[] = {block};
    release(one);
  }
  // Held blocks may have been freed explicitly meanwhile.
  for (BlockId b : p.held) {
    auto& st = blocks_[static_cast<size_t>(b)];
    if (st.in_use && st.ref_count > 0) {
      const BlockId one[] = {b};
      release(one);
    }
  }
  auto& t = tickets_.at(ticket_id);
  t.status = PopulateStatus::kDone;
  t.completes_at = now();
  if (p.on_done) {
    p.on_done(t);
  }
}

PopulateStatus RelationalTensorCache::query_populate(int64_t ticket_id) const {
  return populate_ticket(ticket_id).status;
}

const PopulateTicket& RelationalTensorCache::populate_ticket(
    int64_t ticket_id) const {
  auto it = tickets_.find(ticket_id);
  SERVESIM_CHECK(it != tickets_.end(), ErrorCode::kUnknownTicket,
                 "populate ticket " + std::to_string(ticket_id));
  return it->second;
}

std::vector<BlockId> RelationalTensorCache::alloc_blocks(int64_t n) {
  return allocate(Tier::kNpu, n, ErrorCode::kOutOfMemory);
}

BlockId RelationalTensorCache::append_block(int64_t seq_id) {
  const BlockId id = allocate(Tier::kNpu, 1, ErrorCode::kOutOfMemory).front();
  blocks_[static_cast<size_t>(id)].seq_id = seq_id;
  return id;
}

std::vector<BlockId> RelationalTensorCache::copy(
    std::span<const BlockId> block_ids, Tier dst_tier) {
  for (BlockId id : block_ids) {
    SERVESIM_CHECK(state(id).in_use, ErrorCode::kUnknownBlock,
                   "copy of free block " + std::to_string(id));
  }
  std::vector<BlockId> out;
  for (BlockId id : block_ids) {
    const auto& src = state(id);
    if (src.tier == dst_tier) {
      out.push_back(id);
      continue;
    }
    if (src.node != kRoot && nodes_.at(src.node).replica[tier_index(dst_tier)]) {
      out.push_back(*nodes_.at(src.node).replica[tier_index(dst_tier)]);
      continue;
    }
    const BlockId fresh =
        allocate(dst_tier, 1, ErrorCode::kOutOfMemory).front();
    // allocate may evict, so re-read the source state afterwards.
    const NodeId node = state(id).node;
    if (node != kRoot) {
      auto& n = nodes_.at(node);
      n.replica[tier_index(dst_tier)] = fresh;
      auto& st = blocks_[static_cast<size_t>(fresh)];
      st.node = node;
      st.ref_count = 0;
      st.last_use = n.last_use;
      refresh_lru(node);
    }
    out.push_back(fresh);
  }
  return out;
}

void RelationalTensorCache::free(std::span<const BlockId> block_ids) {
  std::vector<BlockId> ids(block_ids.begin(), block_ids.end());
  for (BlockId id : ids) {
    SERVESIM_CHECK(state(id).in_use, ErrorCode::kDoubleFree,
                   "block " + std::to_string(id) + " is already free");
  }
  std::vector<BlockId> zeroed;
  for (BlockId id : ids) {
    auto& st = state(id);
    if (st.ref_count > 0) {
      --st.ref_count;
    }
    if (st.ref_count == 0) {
      zeroed.push_back(id);
    } else if (st.node != kRoot) {
      refresh_lru(st.node);
    }
  }
  for (BlockId id : zeroed) {
    auto& st = state(id);
    if (!st.in_use || st.node == kRoot) {
      continue;
    }
    drop_replica(nodes_.at(st.node), st.tier);
  }
  for (BlockId id : zeroed) {
    auto& st = state(id);
    if (st.in_use && st.node == kRoot) {
      return_to_pool(id);
    }
  }
}

void RelationalTensorCache::release(std::span<const BlockId> block_ids) {
  for (BlockId id : block_ids) {
    auto& st = state(id);
    SERVESIM_CHECK(st.in_use && st.ref_count > 0, ErrorCode::kInvalidArgument,
                   "release of unreferenced block " + std::to_string(id));
    --st.ref_count;
    if (st.ref_count > 0) {
      continue;
    }
    if (st.node != kRoot) {
      refresh_lru(st.node);
    } else {
      return_to_pool(id);
    }
  }
}

void RelationalTensorCache::acquire(std::span<const BlockId> block_ids) {
  for (BlockId id : block_ids) {
    auto& st = state(id);
    SERVESIM_CHECK(st.in_use, ErrorCode::kUnknownBlock,
                   "acquire of free block " + std::to_string(id));
    ++st.ref_count;
    st.last_use = now();
    if (st.node != kRoot) {
      refresh_lru(st.node);
    }
  }
}

void RelationalTensorCache::commit_prefix(
    std::span<const TokenId> tokens, std::span<const BlockId> block_ids,
    const std::optional<std::string>& context_id) {
  const auto bs = static_cast<size_t>(config_.block_size);
  const size_t needed = (tokens.size() + bs - 1) / bs;
  SERVESIM_CHECK(block_ids.size() == needed, ErrorCode::kInvalidCoverage,
                 std::to_string(block_ids.size()) + " blocks for " +
                     std::to_string(tokens.size()) + " tokens (need " +
                     std::to_string(needed) + ")");
  for (BlockId id : block_ids) {
    SERVESIM_CHECK(id >= 0 && id < static_cast<BlockId>(blocks_.size()) &&
                       blocks_[static_cast<size_t>(id)].in_use,
                   ErrorCode::kInvalidCoverage,
                   "block " + std::to_string(id) + " is not allocated");
  }
  const size_t full = tokens.size() / bs;
  std::vector<NodeId> path;
  bool grew = false;
  NodeId cur = kRoot;
  for (size_t i = 0; i < full; ++i) {
    TokenSeq span(tokens.begin() + i * bs, tokens.begin() + (i + 1) * bs);
    const BlockId b = block_ids[i];
    auto& st = blocks_[static_cast<size_t>(b)];
    auto& kids = children_of(cur);
    auto it = kids.find(span);
    NodeId next;
    if (it != kids.end()) {
      next = it->second;
      auto& node = nodes_.at(next);
      auto& slot = node.replica[tier_index(st.tier)];
      if (!slot && st.node == kRoot) {
        slot = b;
        st.node = next;
      }
    } else {
      if (st.node != kRoot) {
        // Block already backs another prefix; leave the new branch unbacked
        // rather than aliasing one block under two paths.
        break;
      }
      next = create_node(cur, std::move(span));
      nodes_.at(next).replica[tier_index(st.tier)] = b;
      st.node = next;
      grew = true;
    }
    touch(nodes_.at(next));
    path.push_back(next);
    cur = next;
  }
  if (grew && on_added_) {
    on_added_(tokens.first(path.size() * bs));
  }
  if (context_id) {
    unpin_context(*context_id);
    if (!path.empty()) {
      contexts_[*context_id] = path;
      for (NodeId id : path) {
        nodes_.at(id).contexts.push_back(*context_id);
        refresh_lru(id);
      }
    }
  }
}

Block RelationalTensorCache::block(BlockId id) const {
  const auto& st = state(id);
  Block b;
  b.id = id;
  b.tier = st.tier;
  b.ref_count = st.ref_count;
  b.last_use = st.last_use;
  b.in_use = st.in_use;
  b.indexed = st.node != kRoot;
  if (b.indexed) {
    b.token_span = nodes_.at(st.node).span;
  }
  return b;
}

TierUsage RelationalTensorCache::usage(Tier tier) const {
  TierUsage u;
  u.capacity = tier == Tier::kNpu ? config_.npu_capacity
                                  : config_.dram_capacity;
  for (const auto& st : blocks_) {
    if (st.tier != tier) {
      continue;
    }
    if (!st.in_use) {
      ++u.free;
    } else if (st.node != kRoot && st.ref_count == 0) {
      ++u.cached;
    } else {
      ++u.allocated;
    }
  }
  return u;
}

int64_t RelationalTensorCache::free_blocks(Tier tier) const {
  return static_cast<int64_t>(free_lists_[tier_index(tier)].size());
}

std::vector<Micros> RelationalTensorCache::eviction_candidates(
    Tier tier) const {
  std::vector<Micros> out;
  for (const auto& [last_use, id] : lru_[tier_index(tier)]) {
    out.push_back(last_use);
  }
  return out;
}

std::vector<TokenSeq> RelationalTensorCache::indexed_prefixes() const {
  std::vector<TokenSeq> out;
  for (const auto& [id, node] : nodes_) {
    out.push_back(path_tokens(id));
  }
  return out;
}

nlohmann::json RelationalTensorCache::dump_tree() const {
  std::function<nlohmann::json(NodeId)> dump = [&](NodeId id) {
    const Node& node = nodes_.at(id);
    nlohmann::json j;
    j["span"] = node.span;
    j["last_use"] = node.last_use;
    auto reps = nlohmann::json::array();
    for (Tier tier : {Tier::kNpu, Tier::kDram}) {
      if (const auto& r = node.replica[tier_index(tier)]) {
        reps.push_back(
            {{"block", *r},
             {"tier", tier_name(tier)},
             {"ref_count", blocks_[static_cast<size_t>(*r)].ref_count}});
      }
    }
    j["replicas"] = reps;
    if (!node.contexts.empty()) {
      j["contexts"] = node.contexts;
    }
    auto kids = nlohmann::json::array();
    for (const auto& [span, child] : node.children) {
      kids.push_back(dump(child));
    }
    j["children"] = kids;
    return j;
  };
  auto roots = nlohmann::json::array();
  for (const auto& [span, id] : root_children_) {
    roots.push_back(dump(id));
  }
  return {{"block_size", config_.block_size}, {"roots", roots}};
}

}  // namespace servesim::rtc
