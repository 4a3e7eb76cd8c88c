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
#include <span>
#include <string_view>
#include <vector>

#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/predictor.h"
#include "servesim/dsched/prompt_tree.h"
#include "servesim/workload/request.h"

namespace servesim::dsched {

enum class MemberKind : int32_t { kColocated, kDisaggPair };

std::string_view member_kind_name(MemberKind kind);

// One schedulable unit of a TE group: a colocated TE, or a prefill/decode
// pair. id is the colocated TE or the pair's prefill TE.
struct GroupMember {
  MemberKind kind = MemberKind::kColocated;
  TeId id = -1;
  TeId decode_te = -1;
  int64_t queued_tokens = 0;
  int64_t running_tokens = 0;

  int64_t load() const { return queued_tokens + running_tokens; }
  bool operator==(const GroupMember&) const = default;
};

// Prefix match length of a request at a member.
using PrefixMatcher =
    std::function<int64_t(const GroupMember&, const workload::Request&)>;

// Matcher over one global tree per member kind.
PrefixMatcher tree_matcher(const GlobalPromptTree& colocated,
                           const GlobalPromptTree& prefill);

constexpr double kDefaultBalanceEpsilon = 0.2;

// Heatmap cell for the request's prefill length and predicted ratio; >= 0
// (including out of range) selects pairs, < 0 colocated TEs. Falls back to
// the other kind when the chosen one is empty.
std::vector<GroupMember> pd_aware(const workload::Request& request,
                                  const std::vector<GroupMember>& group,
                                  const Heatmap& heatmap,
                                  const DecodePredictor& predictor);
// Longest match; ties on lower queued_tokens, then lower id.
GroupMember locality_aware(const workload::Request& request,
                           const std::vector<GroupMember>& sub_group,
                           const PrefixMatcher& matcher);
// Least queued + running tokens; ties on lower id.
GroupMember load_aware(const std::vector<GroupMember>& sub_group);
// (max - min) <= epsilon * max(1, mean) over member loads.
bool is_load_balanced(const std::vector<GroupMember>& sub_group,
                      double epsilon = kDefaultBalanceEpsilon);
GroupMember dist_sched(const workload::Request& request,
                       const std::vector<GroupMember>& group,
                       const Heatmap& heatmap,
                       const DecodePredictor& predictor,
                       const PrefixMatcher& matcher,
                       double epsilon = kDefaultBalanceEpsilon);

enum class DpStrategy : int32_t { kRoundRobin, kGreedy };

class DpDispatcher {
 public:
  explicit DpDispatcher(DpStrategy strategy) : strategy_(strategy) {}
  // Index of the chosen DP group given each group's queued tokens.
  size_t dispatch(std::span<const int64_t> queued_tokens);

 private:
  DpStrategy strategy_;
  size_t next_ = 0;
};

}  // namespace servesim::dsched
