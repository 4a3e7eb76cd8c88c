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

#include <random>

#include "../support/oracles.h"
#include "servesim/common/error.h"
#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/policy.h"
#include "servesim/dsched/predictor.h"
#include "servesim/dsched/prompt_tree.h"
#include "servesim/rtc/rtc.h"

namespace servesim::dsched {
namespace {

using testing::random_tokens;

HeatmapAxes tiny_axes() {
  HeatmapAxes a;
  a.prefill_edges = {1024, 4096};
  a.ratio_edges = {0.1, 1.0};
  return a;
}

JctProfile profile_with(double rps, double coloc, double disagg) {
  auto p = JctProfile::empty(tiny_axes(), rps);
  for (auto& row : p.colocated) {
    for (auto& v : row) {
      v = coloc;
    }
  }
  for (auto& row : p.disaggregated) {
    for (auto& v : row) {
      v = disagg;
    }
  }
  return p;
}

workload::Request req(int64_t prompt, int64_t decode,
                      const std::string& id = "r") {
  workload::Request r;
  r.id = id;
  r.prompt_tokens.assign(static_cast<size_t>(prompt), 1);
  r.true_decode_len = decode;
  return r;
}

TEST(HeatmapTest, CellFormula) {
  EXPECT_DOUBLE_EQ(cell_value(2.0, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(cell_value(1.5, 1.0), 0.5);
  const auto h = build_single(tiny_axes(), profile_with(1.0, 3.0, 2.0));
  EXPECT_DOUBLE_EQ(h.at(1, 1), 0.5);
  EXPECT_EQ(h.provenance, "single-rps");
}

TEST(HeatmapTest, CombineIsElementwiseSum) {
  auto a = Heatmap::zeros(tiny_axes());
  auto b = Heatmap::zeros(tiny_axes());
  a.cells[0][0] = 0.3;
  b.cells[0][0] = -0.1;
  const auto c = combine({a, b});
  EXPECT_NEAR(c.at(0, 0), 0.2, 1e-15);
  EXPECT_EQ(c.provenance, "combined");
  auto other = Heatmap::zeros(HeatmapAxes{});
  EXPECT_THROW(combine({a, other}), Error);
}

TEST(HeatmapTest, ScaleInvariance) {
  const auto a = build_single(tiny_axes(), profile_with(1.0, 3.0, 2.0));
  const auto b = build_single(tiny_axes(), profile_with(1.0, 300.0, 200.0));
  EXPECT_NEAR(a.at(0, 0), b.at(0, 0), 1e-12);
}

TEST(HeatmapTest, MissingCellThrows) {
  auto p = profile_with(1.0, 3.0, 2.0);
  p.disaggregated[1][0].reset();
  try {
    build_single(tiny_axes(), p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCell);
  }
}

TEST(HeatmapTest, BucketsAreUpperInclusive) {
  const HeatmapAxes a;
  EXPECT_EQ(*a.prefill_bucket(512), 0u);
  EXPECT_EQ(*a.prefill_bucket(513), 1u);
  EXPECT_EQ(*a.prefill_bucket(8192), 4u);
  EXPECT_FALSE(a.prefill_bucket(8193).has_value());
  EXPECT_EQ(*a.ratio_bucket(0.05), 1u);
  EXPECT_FALSE(a.ratio_bucket(0.0).has_value());
}

TEST(HeatmapTest, SignStability) {
  auto a = Heatmap::zeros(tiny_axes());
  auto b = Heatmap::zeros(tiny_axes());
  a.cells = {{1, 1}, {-1, 1}};
  b.cells = {{1, -1}, {-1, 1}};
  EXPECT_DOUBLE_EQ(sign_stability({a, b}), 0.75);
}

TEST(HeatmapTest, JsonRoundTrip) {
  const auto set = build_heatmap(
      tiny_axes(), {profile_with(1.0, 3.0, 2.0), profile_with(2.0, 1.0, 2.0)});
  const auto back = heatmap_set_from_json(heatmap_set_to_json(set));
  ASSERT_EQ(back.per_rps.size(), 2u);
  EXPECT_EQ(back.combined.cells, set.combined.cells);
  EXPECT_EQ(back.combined.axes, set.combined.axes);
  EXPECT_EQ(*back.per_rps[1].rps, 2.0);
}

TEST(PredictorTest, PerfectPredictorFloors) {
  DecodePredictor p{128, 1.0, 0};
  EXPECT_EQ(p.predict_bucket(req(10, 300)), 2);
  EXPECT_DOUBLE_EQ(p.predicted_length(req(10, 300)), 2.5 * 128);
}

TEST(PredictorTest, CalibratedAccuracy) {
  DecodePredictor p{128, 0.849, 17};
  std::mt19937_64 rng(5);
  int64_t hits = 0;
  const int64_t n = 100000;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t decode = 128 + static_cast<int64_t>(rng() % 4000);
    const auto r = req(4, decode, "q" + std::to_string(i));
    hits += p.predict_bucket(r) == decode / 128 ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.849, 0.01);
}

TEST(PredictorTest, ClampsAtBucketZeroAndIsPure) {
  DecodePredictor p{128, 0.0, 9};
  for (int i = 0; i < 200; ++i) {
    const auto r = req(4, 5, "z" + std::to_string(i));
    EXPECT_GE(p.predict_bucket(r), 0);
    EXPECT_EQ(p.predict_bucket(r), p.predict_bucket(r));
  }
}

std::vector<GroupMember> mixed_group() {
  return {{MemberKind::kColocated, 0, -1, 0, 0},
          {MemberKind::kColocated, 1, -1, 0, 0},
          {MemberKind::kDisaggPair, 2, 3, 0, 0}};
}

Heatmap uniform_map(double v) {
  auto h = Heatmap::zeros(HeatmapAxes{});
  for (auto& row : h.cells) {
    for (auto& c : row) {
      c = v;
    }
  }
  return h;
}

TEST(PolicyTest, PdAwareFollowsSign) {
  const DecodePredictor p{128, 1.0, 0};
  const auto r = req(1000, 100);
  auto pos = pd_aware(r, mixed_group(), uniform_map(0.4), p);
  ASSERT_EQ(pos.size(), 1u);
  EXPECT_EQ(pos[0].kind, MemberKind::kDisaggPair);
  auto neg = pd_aware(r, mixed_group(), uniform_map(-0.2), p);
  EXPECT_EQ(neg.size(), 2u);
  EXPECT_EQ(neg[0].kind, MemberKind::kColocated);
  EXPECT_EQ(pd_aware(r, mixed_group(), uniform_map(0.0), p)[0].kind,
            MemberKind::kDisaggPair);
  // Out of range prefill length counts as zero.
  EXPECT_EQ(pd_aware(req(9000, 100), mixed_group(), uniform_map(-1.0), p)[0]
                .kind,
            MemberKind::kDisaggPair);
  // Chosen kind absent: fall back.
  auto only_coloc = mixed_group();
  only_coloc.pop_back();
  EXPECT_EQ(pd_aware(r, only_coloc, uniform_map(1.0), p).size(), 2u);
}

TEST(PolicyTest, LoadAwareAndBalance) {
  std::vector<GroupMember> g = {{MemberKind::kColocated, 0, -1, 10, 0},
                                {MemberKind::kColocated, 1, -1, 5, 0},
                                {MemberKind::kColocated, 2, -1, 7, 0}};
  EXPECT_EQ(load_aware(g).id, 1);
  for (auto& m : g) {
    m.queued_tokens = 3;
  }
  EXPECT_EQ(load_aware(g).id, 0);
  EXPECT_EQ(load_aware({g[2]}).id, 2);

  std::vector<GroupMember> two = {{MemberKind::kColocated, 0, -1, 100, 0},
                                  {MemberKind::kColocated, 1, -1, 100, 0}};
  EXPECT_TRUE(is_load_balanced(two));
  two[1].queued_tokens = 0;
  EXPECT_FALSE(is_load_balanced(two));
  two[0].queued_tokens = 0;
  EXPECT_TRUE(is_load_balanced(two));
  EXPECT_THROW(is_load_balanced({}), Error);
}

TEST(PolicyTest, LocalityPrefersLongestMatchThenLoadThenId) {
  GlobalPromptTree coloc(16);
  GlobalPromptTree prefill(16);
  const TokenSeq prompt(600, 7);
  coloc.add(1, std::span<const TokenId>(prompt.data(), 512));
  auto g = mixed_group();
  g[0].queued_tokens = 0;
  g[1].queued_tokens = 50;
  const auto m = tree_matcher(coloc, prefill);
  workload::Request r = req(600, 10);
  r.prompt_tokens = prompt;
  std::vector<GroupMember> sub(g.begin(), g.begin() + 2);
  EXPECT_EQ(locality_aware(r, sub, m).id, 1);
  GlobalPromptTree empty(16);
  const auto none = tree_matcher(empty, empty);
  EXPECT_EQ(locality_aware(r, sub, none).id, 0);
  sub[0].queued_tokens = 50;
  EXPECT_EQ(locality_aware(r, sub, none).id, 0);
}

// Balanced loads, the prefix held by colocated TE 1, negative cell.
TEST(PolicyTest, DistSchedHandTrace) {
  GlobalPromptTree coloc(16);
  GlobalPromptTree prefill(16);
  TokenSeq prompt(1000, 3);
  coloc.add(1, prompt);
  workload::Request r = req(1000, 50);
  r.prompt_tokens = prompt;
  const DecodePredictor p{128, 1.0, 0};
  auto g = mixed_group();
  const auto m = tree_matcher(coloc, prefill);
  EXPECT_EQ(dist_sched(r, g, uniform_map(-0.3), p, m).id, 1);
  // Imbalanced: least loaded colocated TE wins despite the cache.
  g[1].queued_tokens = 5000;
  EXPECT_EQ(dist_sched(r, g, uniform_map(-0.3), p, m).id, 0);
  // Single member regardless of anything else.
  EXPECT_EQ(dist_sched(r, {g[2]}, uniform_map(-0.3), p, m).id, 2);
}

TEST(PolicyTest, DistSchedMatchesStraightLineReference) {
  const auto r = testing::dist_sched_fuzz(77, 10000);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_GT(r.balanced_branch, 1000);
  EXPECT_LT(r.balanced_branch, 9000);
}

TEST(DpDispatchTest, Strategies) {
  DpDispatcher rr(DpStrategy::kRoundRobin);
  const std::vector<int64_t> q{4, 1, 9};
  std::vector<size_t> got;
  for (int i = 0; i < 6; ++i) {
    got.push_back(rr.dispatch(q));
  }
  EXPECT_EQ(got, (std::vector<size_t>{0, 1, 2, 0, 1, 2}));
  DpDispatcher greedy(DpStrategy::kGreedy);
  EXPECT_EQ(greedy.dispatch(q), 1u);
  const std::vector<int64_t> one{3};
  EXPECT_EQ(greedy.dispatch(one), 0u);
}

TEST(PromptTreeTest, CommitAndEvictVisible) {
  GlobalPromptTree t(4);
  const TokenSeq s{1, 2, 3, 4, 5, 6, 7, 8, 9};
  on_te_cache_update(t, 5, {s}, {});
  EXPECT_EQ(t.match_len(5, s), 8);
  on_te_cache_update(t, 5, {}, {TokenSeq(s.begin(), s.begin() + 4)});
  EXPECT_EQ(t.match_len(5, s), 0);
  EXPECT_EQ(t.nodes(), 0);
}

// Global trees fed by local cache listeners agree with the local caches
// under random commits and frees at two TEs.
TEST(PromptTreeTest, GlobalMatchesLocalCaches) {
  sim::Simulator sim;
  rtc::RtcConfig cfg;
  cfg.block_size = 4;
  cfg.npu_capacity = 100000;
  GlobalPromptTree global(4);
  std::vector<std::unique_ptr<rtc::RelationalTensorCache>> local;
  for (TeId te = 0; te < 2; ++te) {
    local.push_back(std::make_unique<rtc::RelationalTensorCache>(cfg, sim));
    local.back()->set_prefix_listeners(
        [&global, te](std::span<const TokenId> t) { global.add(te, t); },
        [&global, te](std::span<const TokenId> t) { global.remove(te, t); });
  }
  std::mt19937_64 rng(3);
  std::vector<std::pair<size_t, std::vector<rtc::BlockId>>> held;
  std::vector<TokenSeq> prompts;
  for (int op = 0; op < 3000; ++op) {
    if (rng() % 3 != 0 || held.empty()) {
      const size_t te = rng() % 2;
      TokenSeq t = random_tokens(rng, 1 + static_cast<int64_t>(rng() % 24), 2);
      const auto n = static_cast<int64_t>((t.size() + 3) / 4);
      auto b = local[te]->alloc_blocks(n);
      local[te]->commit_prefix(t, b);
      held.emplace_back(te, std::move(b));
      prompts.push_back(std::move(t));
    } else {
      const size_t i = rng() % held.size();
      local[held[i].first]->free(held[i].second);
      held.erase(held.begin() + static_cast<long>(i));
    }
    const auto& q = prompts[rng() % prompts.size()];
    for (TeId te = 0; te < 2; ++te) {
      ASSERT_EQ(global.match_len(te, q),
                local[static_cast<size_t>(te)]
                    ->match_by_prefix_tokens(q)
                    .matched_token_count)
          << "op " << op;
    }
  }
}

}  // namespace
}  // namespace servesim::dsched
