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
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "servesim/workload/request.h"

namespace servesim::dsched {

// Block granular trie mirroring the prefixes committed at a set of TEs of
// one kind. Each node carries the TEs that currently hold it; TE sets are
// closed under ancestors because local indices are.
class GlobalPromptTree {
 public:
  explicit GlobalPromptTree(int32_t block_size = 16);

  int32_t block_size() const { return block_size_; }

  // Every whole block of tokens is now present at te.
  void add(TeId te, std::span<const TokenId> tokens);
  // The node spelled by tokens (whole blocks) left te's index.
  void remove(TeId te, std::span<const TokenId> tokens);
  // Drops te everywhere, e.g. on TE failure.
  void remove_te(TeId te);

  // Matched token count per TE holding at least one block.
  std::map<TeId, int64_t> match(std::span<const TokenId> tokens) const;
  int64_t match_len(TeId te, std::span<const TokenId> tokens) const;
  int64_t nodes() const { return nodes_; }

 private:
  struct Node {
    std::map<TokenSeq, std::unique_ptr<Node>> children;
    std::set<TeId> tes;
  };
  bool remove_rec(Node& node, TeId te);

  int32_t block_size_;
  Node root_;
  int64_t nodes_ = 0;
};

// Synchronization entry point from a TE's local index.
void on_te_cache_update(GlobalPromptTree& tree, TeId te,
                        const std::vector<TokenSeq>& committed,
                        const std::vector<TokenSeq>& evicted);

}  // namespace servesim::dsched
