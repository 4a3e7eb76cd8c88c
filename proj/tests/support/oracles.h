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

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/policy.h"
#include "servesim/dsched/predictor.h"
#include "servesim/dsched/prompt_tree.h"
#include "servesim/rtc/rtc.h"
#include "servesim/sim/simulator.h"

namespace servesim::testing {

inline int64_t lcp(const TokenSeq& a, const TokenSeq& b) {
  size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) {
    ++n;
  }
  return static_cast<int64_t>(n);
}

// Longest common prefix of query against any stored sequence, cut down to
// whole blocks.
inline int64_t naive_match(const std::vector<TokenSeq>& stored,
                           const TokenSeq& query, int64_t block_size) {
  int64_t best = 0;
  for (const auto& s : stored) {
    best = std::max(best, lcp(s, query));
  }
  return best / block_size * block_size;
}

inline TokenSeq random_tokens(std::mt19937_64& rng, int64_t len,
                              TokenId vocab) {
  std::uniform_int_distribution<TokenId> tok(0, vocab - 1);
  TokenSeq out(static_cast<size_t>(len));
  for (auto& t : out) {
    t = tok(rng);
  }
  return out;
}

struct RtcFuzzResult {
  int64_t ops = 0;
  int64_t matches = 0;
  int64_t mismatches = 0;
  std::string first_mismatch;
};

// Random commit/free/release/match sequence on a cache large enough that
// nothing is evicted. The oracle keeps the block-aligned paths that should
// be indexed; a freed block that backed a path removes that path and every
// extension of it.
inline RtcFuzzResult rtc_fuzz(uint64_t seed, int64_t ops) {
  constexpr int32_t kBlock = 4;
  sim::Simulator sim;
  rtc::RtcConfig cfg;
  cfg.block_size = kBlock;
  cfg.npu_capacity = ops * 8 + 64;
  rtc::RelationalTensorCache cache(cfg, sim);
  std::mt19937_64 rng(seed);

  struct Held {
    TokenSeq tokens;
    std::vector<rtc::BlockId> blocks;
  };
  std::vector<Held> held;
  std::set<TokenSeq> paths;
  std::vector<TokenSeq> history;

  auto random_prompt = [&]() {
    // Small vocab and reuse of earlier prompts give deep shared prefixes.
    TokenSeq base;
    if (!history.empty() && rng() % 2 == 0) {
      base = history[rng() % history.size()];
      base.resize(rng() % (base.size() + 1));
    }
    const auto extra = static_cast<int64_t>(rng() % 20);
    auto tail = random_tokens(rng, extra, 3);
    base.insert(base.end(), tail.begin(), tail.end());
    if (base.empty()) {
      base.push_back(0);
    }
    if (base.size() > 40) {
      base.resize(40);
    }
    return base;
  };

  RtcFuzzResult out;
  for (int64_t op = 0; op < ops; ++op) {
    ++out.ops;
    const auto kind = rng() % 10;
    if (kind < 4) {
      TokenSeq t = random_prompt();
      history.push_back(t);
      const auto n = static_cast<int64_t>((t.size() + kBlock - 1) / kBlock);
      auto blocks = cache.alloc_blocks(n);
      cache.commit_prefix(t, blocks);
      // Fresh blocks never alias, so every whole-block prefix is indexed.
      for (size_t k = 1; k * kBlock <= t.size(); ++k) {
        paths.insert(TokenSeq(t.begin(), t.begin() + k * kBlock));
      }
      held.push_back({std::move(t), std::move(blocks)});
    } else if (kind < 6 && !held.empty()) {
      const size_t i = rng() % held.size();
      Held h = std::move(held[i]);
      held.erase(held.begin() + static_cast<long>(i));
      for (size_t k = 0; k < h.blocks.size(); ++k) {
        const auto b = cache.block(h.blocks[k]);
        if (!b.indexed || b.ref_count != 1) {
          continue;
        }
        const TokenSeq dead(h.tokens.begin(),
                            h.tokens.begin() + (k + 1) * kBlock);
        for (auto it = paths.begin(); it != paths.end();) {
          if (it->size() >= dead.size() &&
              std::equal(dead.begin(), dead.end(), it->begin())) {
            it = paths.erase(it);
          } else {
            ++it;
          }
        }
        break;
      }
      cache.free(h.blocks);
    } else if (kind < 7 && !held.empty()) {
      // Released blocks stay cached; the oracle is unchanged.
      const size_t i = rng() % held.size();
      cache.release(held[i].blocks);
      held.erase(held.begin() + static_cast<long>(i));
    } else {
      const TokenSeq q = random_prompt();
      const std::vector<TokenSeq> stored(paths.begin(), paths.end());
      const int64_t want = naive_match(stored, q, kBlock);
      const int64_t got = cache.match_by_prefix_tokens(q).matched_token_count;
      ++out.matches;
      if (want != got && out.mismatches++ == 0) {
        out.first_mismatch = "op " + std::to_string(op) + ": want " +
                             std::to_string(want) + " got " +
                             std::to_string(got);
      }
    }
  }
  return out;
}

// Scheduler fixture ---------------------------------------------------------

struct SchedFixture {
  workload::Request request;
  std::vector<dsched::GroupMember> group;
  std::map<TeId, std::vector<TokenSeq>> stored;  // per member id
  dsched::Heatmap heatmap;
  dsched::DecodePredictor predictor;
  double epsilon = 0.2;
};

inline SchedFixture random_fixture(std::mt19937_64& rng, int64_t index) {
  SchedFixture f;
  f.predictor.bucket_size = 128;
  f.predictor.accuracy = 0.849;
  f.predictor.seed = rng();
  f.epsilon = std::uniform_real_distribution<double>(0.0, 0.5)(rng);

  f.heatmap = dsched::Heatmap::zeros(dsched::HeatmapAxes{});
  std::uniform_real_distribution<double> cell(-1.0, 1.0);
  for (auto& row : f.heatmap.cells) {
    for (auto& v : row) {
      const auto pick = rng() % 8;
      v = pick == 0 ? 0.0 : cell(rng);
    }
  }
  f.heatmap.provenance = "combined";

  const auto n = static_cast<int64_t>(1 + rng() % 6);
  std::vector<TokenSeq> pool;
  for (int i = 0; i < 4; ++i) {
    pool.push_back(random_tokens(rng, 64 + static_cast<int64_t>(rng() % 512),
                                 4));
  }
  // Balanced-ish loads half the time so both scheduler branches occur.
  const bool near_equal = rng() % 2 == 0;
  const int64_t base = static_cast<int64_t>(rng() % 5000);
  for (int64_t i = 0; i < n; ++i) {
    dsched::GroupMember m;
    const bool pair = rng() % 2 == 0;
    m.kind = pair ? dsched::MemberKind::kDisaggPair
                  : dsched::MemberKind::kColocated;
    m.id = i * 2;
    m.decode_te = pair ? i * 2 + 1 : -1;
    if (near_equal) {
      m.queued_tokens = base + static_cast<int64_t>(rng() % 50);
      m.running_tokens = base / 2;
    } else {
      m.queued_tokens = static_cast<int64_t>(rng() % 8000);
      m.running_tokens = static_cast<int64_t>(rng() % 8000);
    }
    const auto seqs = rng() % 3;
    for (uint64_t s = 0; s < seqs; ++s) {
      TokenSeq t = pool[rng() % pool.size()];
      t.resize(rng() % (t.size() + 1));
      f.stored[m.id].push_back(std::move(t));
    }
    f.group.push_back(m);
  }

  TokenSeq prompt = pool[rng() % pool.size()];
  prompt.resize(1 + rng() % prompt.size());
  auto tail = random_tokens(rng, static_cast<int64_t>(rng() % 9000), 4);
  prompt.insert(prompt.end(), tail.begin(), tail.end());
  f.request.id = "fx-" + std::to_string(index);
  f.request.prompt_tokens = std::move(prompt);
  f.request.true_decode_len = 1 + static_cast<int64_t>(rng() % 6000);
  return f;
}

// Straight-line routing over the fixture, with naive prefix scans and a
// linear heatmap lookup.
inline dsched::GroupMember reference_dist_sched(const SchedFixture& f,
                                                int32_t block_size) {
  const auto& g = f.group;
  if (g.size() == 1) {
    return g[0];
  }
  // PD_aware.
  const double decode =
      (static_cast<double>(f.predictor.predict_bucket(f.request)) + 0.5) *
      static_cast<double>(f.predictor.bucket_size);
  const auto p = static_cast<double>(f.request.prompt_tokens.size());
  const double ratio = decode / p;
  double value = 0.0;
  int row = -1;
  int col = -1;
  const auto& pe = f.heatmap.axes.prefill_edges;
  const auto& re = f.heatmap.axes.ratio_edges;
  for (size_t i = 0; i < pe.size(); ++i) {
    if (p <= static_cast<double>(pe[i])) {
      row = static_cast<int>(i);
      break;
    }
  }
  for (size_t i = 0; i < re.size(); ++i) {
    if (ratio > 0.0 && ratio <= re[i]) {
      col = static_cast<int>(i);
      break;
    }
  }
  if (row >= 0 && col >= 0) {
    value = f.heatmap.cells[static_cast<size_t>(row)][static_cast<size_t>(col)];
  }
  const auto want = value < 0.0 ? dsched::MemberKind::kColocated
                                 : dsched::MemberKind::kDisaggPair;
  std::vector<dsched::GroupMember> tes;
  for (const auto& m : g) {
    if (m.kind == want) {
      tes.push_back(m);
    }
  }
  if (tes.empty()) {
    tes = g;
  }
  // is_load_balanced.
  int64_t lo = INT64_MAX;
  int64_t hi = INT64_MIN;
  double sum = 0;
  for (const auto& m : tes) {
    const int64_t load = m.queued_tokens + m.running_tokens;
    lo = std::min(lo, load);
    hi = std::max(hi, load);
    sum += static_cast<double>(load);
  }
  const double mean = sum / static_cast<double>(tes.size());
  const bool balanced =
      static_cast<double>(hi - lo) <= f.epsilon * std::max(1.0, mean);
  dsched::GroupMember best = tes[0];
  if (balanced) {
    // select_tes_prefix_match.
    int64_t best_len = -1;
    for (const auto& m : tes) {
      auto it = f.stored.find(m.id);
      const int64_t len =
          it == f.stored.end()
              ? 0
              : naive_match(it->second, f.request.prompt_tokens, block_size);
      if (len > best_len ||
          (len == best_len && (m.queued_tokens < best.queued_tokens ||
                               (m.queued_tokens == best.queued_tokens &&
                                m.id < best.id)))) {
        best = m;
        best_len = len;
      }
    }
    return best;
  }
  // select_tes_least_load.
  for (const auto& m : tes) {
    const int64_t l = m.queued_tokens + m.running_tokens;
    const int64_t bl = best.queued_tokens + best.running_tokens;
    if (l < bl || (l == bl && m.id < best.id)) {
      best = m;
    }
  }
  return best;
}

struct SchedFuzzResult {
  int64_t fixtures = 0;
  int64_t mismatches = 0;
  int64_t balanced_branch = 0;
};

inline SchedFuzzResult dist_sched_fuzz(uint64_t seed, int64_t n) {
  constexpr int32_t kBlock = 16;
  std::mt19937_64 rng(seed);
  SchedFuzzResult out;
  for (int64_t i = 0; i < n; ++i) {
    const auto f = random_fixture(rng, i);
    dsched::GlobalPromptTree colocated(kBlock);
    dsched::GlobalPromptTree prefill(kBlock);
    for (const auto& m : f.group) {
      auto it = f.stored.find(m.id);
      if (it == f.stored.end()) {
        continue;
      }
      auto& tree =
          m.kind == dsched::MemberKind::kColocated ? colocated : prefill;
      for (const auto& s : it->second) {
        tree.add(m.id, s);
      }
    }
    const auto matcher = dsched::tree_matcher(colocated, prefill);
    const auto got = dsched::dist_sched(f.request, f.group, f.heatmap,
                                        f.predictor, matcher, f.epsilon);
    const auto want = reference_dist_sched(f, kBlock);
    ++out.fixtures;
    if (!(got == want)) {
      ++out.mismatches;
    }
    const auto sub =
        dsched::pd_aware(f.request, f.group, f.heatmap, f.predictor);
    if (f.group.size() > 1 && dsched::is_load_balanced(sub, f.epsilon)) {
      ++out.balanced_branch;
    }
  }
  return out;
}

}  // namespace servesim::testing
