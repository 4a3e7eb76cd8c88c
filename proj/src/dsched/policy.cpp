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

#include "servesim/dsched/policy.h"

#include <algorithm>

#include "servesim/common/error.h"

namespace servesim::dsched {

std::string_view member_kind_name(MemberKind kind) {
  return kind == MemberKind::kColocated ? "colocated" : "disagg_pair";
}

PrefixMatcher tree_matcher(const GlobalPromptTree& colocated,
                           const GlobalPromptTree& prefill) {
  return [&colocated, &prefill](const GroupMember& m,
                                const workload::Request& r) {
    const auto& tree =
        m.kind == MemberKind::kColocated ? colocated : prefill;
    return tree.match_len(m.id, r.prompt_tokens);
  };
}

std::vector<GroupMember> pd_aware(const workload::Request& request,
                                  const std::vector<GroupMember>& group,
                                  const Heatmap& heatmap,
                                  const DecodePredictor& predictor) {
  std::vector<GroupMember> colocated;
  std::vector<GroupMember> pairs;
  for (const auto& m : group) {
    (m.kind == MemberKind::kColocated ? colocated : pairs).push_back(m);
  }
  const double ratio = predictor.predicted_length(request) /
                       static_cast<double>(request.prompt_len());
  const double value = heatmap.lookup(request.prompt_len(), ratio);
  auto& chosen = value < 0.0 ? colocated : pairs;
  auto& other = value < 0.0 ? pairs : colocated;
  return chosen.empty() ? other : chosen;
}

GroupMember locality_aware(const workload::Request& request,
                           const std::vector<GroupMember>& sub_group,
                           const PrefixMatcher& matcher) {
  SERVESIM_CHECK(!sub_group.empty(), ErrorCode::kInvalidArgument,
                 "empty sub-group");
  const GroupMember* best = nullptr;
  int64_t best_len = -1;
  for (const auto& m : sub_group) {
    const int64_t len = matcher(m, request);
    const bool better =
        best == nullptr || len > best_len ||
        (len == best_len &&
         (m.queued_tokens < best->queued_tokens ||
          (m.queued_tokens == best->queued_tokens && m.id < best->id)));
    if (better) {
      best = &m;
      best_len = len;
    }
  }
  return *best;
}

GroupMember load_aware(const std::vector<GroupMember>& sub_group) {
  SERVESIM_CHECK(!sub_group.empty(), ErrorCode::kInvalidArgument,
                 "empty sub-group");
  return *std::min_element(
      sub_group.begin(), sub_group.end(),
      [](const GroupMember& a, const GroupMember& b) {
        return a.load() != b.load() ? a.load() < b.load() : a.id < b.id;
      });
}

bool is_load_balanced(const std::vector<GroupMember>& sub_group,
                      double epsilon) {
  SERVESIM_CHECK(!sub_group.empty(), ErrorCode::kInvalidArgument,
                 "empty sub-group");
  int64_t lo = sub_group.front().load();
  int64_t hi = lo;
  double sum = 0.0;
  for (const auto& m : sub_group) {
    lo = std::min(lo, m.load());
    hi = std::max(hi, m.load());
    sum += static_cast<double>(m.load());
  }
  const double mean = sum / static_cast<double>(sub_group.size());
  return static_cast<double>(hi - lo) <= epsilon * std::max(1.0, mean);
}

GroupMember dist_sched(const workload::Request& request,
                       const std::vector<GroupMember>& group,
                       const Heatmap& heatmap,
                       const DecodePredictor& predictor,
                       const PrefixMatcher& matcher, double epsilon) {
  SERVESIM_CHECK(!group.empty(), ErrorCode::kInvalidArgument, "empty group");
  if (group.size() == 1) {
    return group.front();
  }
  const auto sub = pd_aware(request, group, heatmap, predictor);
  if (is_load_balanced(sub, epsilon)) {
    return locality_aware(request, sub, matcher);
  }
  return load_aware(sub);
}

size_t DpDispatcher::dispatch(std::span<const int64_t> queued_tokens) {
  SERVESIM_CHECK(!queued_tokens.empty(), ErrorCode::kInvalidArgument,
                 "no DP groups");
  if (strategy_ == DpStrategy::kRoundRobin) {
    return next_++ % queued_tokens.size();
  }
  return static_cast<size_t>(
      std::min_element(queued_tokens.begin(), queued_tokens.end()) -
      queued_tokens.begin());
}

}  // namespace servesim::dsched
