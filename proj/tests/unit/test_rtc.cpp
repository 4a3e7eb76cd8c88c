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

#include <gtest/gtest.h>

#include <numeric>

#include "../support/oracles.h"
#include "servesim/common/error.h"
#include "servesim/rtc/rtc.h"
#include "servesim/sim/simulator.h"

namespace servesim::rtc {
namespace {

TokenSeq iota_tokens(int n, TokenId start = 0) {
  TokenSeq t(static_cast<size_t>(n));
  std::iota(t.begin(), t.end(), start);
  return t;
}

RtcConfig small_config(int64_t npu, int64_t dram = 0) {
  RtcConfig c;
  c.block_size = 4;
  c.npu_capacity = npu;
  c.dram_capacity = dram;
  c.block_bytes = 4096;
  return c;
}

TEST(RtcTest, MatchesNaivePrefixScan) {
  const auto r = testing::rtc_fuzz(1234, 10000);
  EXPECT_GT(r.matches, 1000);
  EXPECT_EQ(r.mismatches, 0) << r.first_mismatch;
}

TEST(RtcTest, PartialBlocksAreNotIndexed) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(16), sim);
  const auto t = iota_tokens(10);
  auto blocks = c.alloc_blocks(3);
  c.commit_prefix(t, blocks);
  EXPECT_EQ(c.match_by_prefix_tokens(t).matched_token_count, 8);
  EXPECT_EQ(c.indexed_nodes(), 2);
  EXPECT_FALSE(c.block(blocks[2]).indexed);
}

TEST(RtcTest, CoverageMismatchThrows) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(16), sim);
  auto blocks = c.alloc_blocks(2);
  try {
    c.commit_prefix(iota_tokens(12), blocks);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCoverage);
  }
}

TEST(RtcTest, OutOfMemoryWhenEverythingIsReferenced) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4), sim);
  auto held = c.alloc_blocks(4);
  try {
    c.alloc_blocks(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfMemory);
  }
  c.free(held);
  EXPECT_EQ(c.free_blocks(), 4);
}

TEST(RtcTest, DoubleFreeThrows) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4), sim);
  auto b = c.alloc_blocks(1);
  c.free(b);
  try {
    c.free(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDoubleFree);
  }
}

TEST(RtcTest, UsageAccountsEveryBlock) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(10), sim);
  auto a = c.alloc_blocks(3);
  c.commit_prefix(iota_tokens(12), a);
  c.release(a);
  auto b = c.alloc_blocks(2);
  const auto u = c.usage(Tier::kNpu);
  EXPECT_EQ(u.capacity, 10);
  EXPECT_EQ(u.cached, 3);
  EXPECT_EQ(u.allocated, 2);
  EXPECT_EQ(u.free, 5);
  EXPECT_EQ(u.free + u.cached + u.allocated, u.capacity);
  c.free(b);
}

TEST(RtcTest, EvictsLeastRecentlyUsedLeafFirst) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4), sim);
  // Two cached chains of two blocks, touched at t=1 and t=2.
  auto old_seq = iota_tokens(8, 0);
  auto new_seq = iota_tokens(8, 100);
  sim.run_until(1);
  auto a = c.alloc_blocks(2);
  c.commit_prefix(old_seq, a);
  c.release(a);
  sim.run_until(2);
  auto b = c.alloc_blocks(2);
  c.commit_prefix(new_seq, b);
  c.release(b);
  sim.run_until(3);
  c.match_by_prefix_tokens(new_seq);
  auto fresh = c.alloc_blocks(2);
  EXPECT_EQ(c.evictions(), 2);
  EXPECT_EQ(c.match_by_prefix_tokens(old_seq).matched_token_count, 0);
  EXPECT_EQ(c.match_by_prefix_tokens(new_seq).matched_token_count, 8);
  const auto& log = c.eviction_log();
  EXPECT_TRUE(std::is_sorted(log.begin(), log.end()));
  c.free(fresh);
}

TEST(RtcTest, ReferencedBlocksAreNotEvicted) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(2), sim);
  auto a = c.alloc_blocks(2);
  c.commit_prefix(iota_tokens(8), a);
  EXPECT_FALSE(c.can_allocate(1));
  EXPECT_EQ(c.reclaimable_blocks(), 0);
  c.release(a);
  EXPECT_EQ(c.reclaimable_blocks(), 2);
  EXPECT_TRUE(c.can_allocate(2));
}

TEST(RtcTest, ContextIdPinsPrefix) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4), sim);
  auto a = c.alloc_blocks(2);
  c.commit_prefix(iota_tokens(8), a, std::string("ctx"));
  c.release(a);
  EXPECT_EQ(c.match_by_id("ctx").matched_token_count, 8);
  EXPECT_EQ(c.reclaimable_blocks(), 0);
  EXPECT_EQ(c.match_by_id("other").matched_token_count, 0);
}

TEST(RtcTest, PopulateBringsDramReplicaBack) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4, 4), sim);
  const auto t = iota_tokens(8);
  auto a = c.alloc_blocks(2);
  c.commit_prefix(t, a);
  auto dram = c.copy(a, Tier::kDram);
  ASSERT_EQ(dram.size(), 2u);
  c.release(a);
  // Pressure the NPU tier so the NPU replicas are evicted.
  auto filler = c.alloc_blocks(4);
  auto m = c.match_by_prefix_tokens(t);
  EXPECT_EQ(m.matched_token_count, 8);
  EXPECT_FALSE(m.fully_on_npu);
  EXPECT_EQ(m.off_npu_blocks(), 2);
  c.free(filler);
  bool done = false;
  auto ticket = c.populate(m, [&](const PopulateTicket& t2) {
    done = t2.status == PopulateStatus::kDone;
  });
  EXPECT_EQ(c.query_populate(ticket.ticket_id), PopulateStatus::kPending);
  EXPECT_EQ(ticket.completes_at, c.estimate_fetch(2));
  sim.run();
  EXPECT_TRUE(done);
  EXPECT_TRUE(c.match_by_prefix_tokens(t).fully_on_npu);
}

TEST(RtcTest, UnknownTicketThrows) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(4), sim);
  try {
    c.query_populate(99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownTicket);
  }
}

TEST(RtcTest, ListenersSeeAddsAndRemovals) {
  sim::Simulator sim;
  RelationalTensorCache c(small_config(8), sim);
  std::vector<TokenSeq> added;
  std::vector<TokenSeq> removed;
  c.set_prefix_listeners(
      [&](std::span<const TokenId> t) { added.emplace_back(t.begin(), t.end()); },
      [&](std::span<const TokenId> t) {
        removed.emplace_back(t.begin(), t.end());
      });
  auto a = c.alloc_blocks(2);
  c.commit_prefix(iota_tokens(8), a);
  ASSERT_EQ(added.size(), 1u);
  EXPECT_EQ(added[0], iota_tokens(8));
  c.free(a);
  EXPECT_EQ(removed.size(), 2u);
  EXPECT_EQ(c.indexed_nodes(), 0);
}

}  // namespace
}  // namespace servesim::rtc
