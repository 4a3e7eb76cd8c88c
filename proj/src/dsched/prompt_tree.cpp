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

#include "servesim/dsched/prompt_tree.h"

#include <algorithm>

#include "servesim/common/error.h"

namespace servesim::dsched {

GlobalPromptTree::GlobalPromptTree(int32_t block_size)
    : block_size_(block_size) {
  SERVESIM_CHECK(block_size_ >= 1, ErrorCode::kInvalidArgument,
                 "block_size must be >= 1");
}

void GlobalPromptTree::add(TeId te, std::span<const TokenId> tokens) {
  const auto bs = static_cast<size_t>(block_size_);
  Node* cur = &root_;
  for (size_t off = 0; off + bs <= tokens.size(); off += bs) {
    TokenSeq key(tokens.begin() + off, tokens.begin() + off + bs);
    auto& child = cur->children[std::move(key)];
    if (!child) {
      child = std::make_unique<Node>();
      ++nodes_;
    }
    cur = child.get();
    cur->tes.insert(te);
  }
}

bool GlobalPromptTree::remove_rec(Node& node, TeId te) {
  node.tes.erase(te);
  for (auto it = node.children.begin(); it != node.children.end();) {
    if (remove_rec(*it->second, te)) {
      it = node.children.erase(it);
      --nodes_;
    } else {
      ++it;
    }
  }
  return node.tes.empty() && node.children.empty();
}

void GlobalPromptTree::remove(TeId te, std::span<const TokenId> tokens) {
  const auto bs = static_cast<size_t>(block_size_);
  if (tokens.size() < bs) {
    return;
  }
  std::vector<std::pair<Node*, const TokenSeq*>> path;
  Node* cur = &root_;
  for (size_t off = 0; off + bs <= tokens.size(); off += bs) {
    TokenSeq key(tokens.begin() + off, tokens.begin() + off + bs);
    auto it = cur->children.find(key);
    if (it == cur->children.end()) {
      return;
    }
    path.emplace_back(cur, &it->first);
    cur = it->second.get();
  }
  // A TE that lost a node also lost everything below it.
  const bool empty = remove_rec(*cur, te);
  if (!empty) {
    return;
  }
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    Node* parent = it->first;
    auto child = parent->children.find(*it->second);
    if (!child->second->tes.empty() || !child->second->children.empty()) {
      break;
    }
    parent->children.erase(child);
    --nodes_;
  }
}

void GlobalPromptTree::remove_te(TeId te) {
  for (auto it = root_.children.begin(); it != root_.children.end();) {
    if (remove_rec(*it->second, te)) {
      it = root_.children.erase(it);
      --nodes_;
    } else {
      ++it;
    }
  }
}

std::map<TeId, int64_t> GlobalPromptTree::match(
    std::span<const TokenId> tokens) const {
  std::map<TeId, int64_t> out;
  const auto bs = static_cast<size_t>(block_size_);
  const Node* cur = &root_;
  TokenSeq key(bs);
  for (size_t off = 0; off + bs <= tokens.size(); off += bs) {
    std::copy(tokens.begin() + off, tokens.begin() + off + bs, key.begin());
    auto it = cur->children.find(key);
    if (it == cur->children.end()) {
      break;
    }
    cur = it->second.get();
    for (TeId te : cur->tes) {
      out[te] = static_cast<int64_t>(off + bs);
    }
  }
  return out;
}

int64_t GlobalPromptTree::match_len(TeId te,
                                    std::span<const TokenId> tokens) const {
  const auto bs = static_cast<size_t>(block_size_);
  const Node* cur = &root_;
  int64_t len = 0;
  TokenSeq key(bs);
  for (size_t off = 0; off + bs <= tokens.size(); off += bs) {
    std::copy(tokens.begin() + off, tokens.begin() + off + bs, key.begin());
    auto it = cur->children.find(key);
    if (it == cur->children.end() || it->second->tes.count(te) == 0) {
      break;
    }
    cur = it->second.get();
    len = static_cast<int64_t>(off + bs);
  }
  return len;
}

void on_te_cache_update(GlobalPromptTree& tree, TeId te,
                        const std::vector<TokenSeq>& committed,
                        const std::vector<TokenSeq>& evicted) {
  for (const auto& seq : evicted) {
    tree.remove(te, seq);
  }
  for (const auto& seq : committed) {
    tree.add(te, seq);
  }
}

}  // namespace servesim::dsched
