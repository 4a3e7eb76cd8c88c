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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "servesim/sim/time.h"

namespace servesim {

using TokenId = int32_t;
using TokenSeq = std::vector<TokenId>;
using TeId = int64_t;

namespace workload {

// Marks a request whose prompt starts with a shared prefix group.
struct PrefixRef {
  int32_t group = 0;
  int32_t length = 0;
  bool operator==(const PrefixRef&) const = default;
};

// An inference request as seen at the job executor. true_decode_len is the
// ground truth output length; schedulers must go through a predictor.
struct Request {
  std::string id;
  Micros arrival = 0;
  TokenSeq prompt_tokens;
  int64_t true_decode_len = 1;
  std::optional<std::string> context_id;
  int32_t priority = 0;
  std::optional<PrefixRef> prefix;

  int64_t prompt_len() const {
    return static_cast<int64_t>(prompt_tokens.size());
  }
  bool operator==(const Request&) const = default;
};

// Throws Error(kInvalidSpec) when the request violates its invariants.
void validate(const Request& req);

enum class JobKind : int32_t { kChatServing };

enum class TaskKind : int32_t { kPrefill, kDecode, kColocated };

enum class TaskState : int32_t { kQueued, kReady, kRunning, kDone };

std::string_view task_kind_name(TaskKind kind);

struct Task {
  TaskKind kind = TaskKind::kColocated;
  TeId assigned_te = -1;
  TaskState state = TaskState::kQueued;
};

// A chat job has one colocated task, or a prefill task followed by a decode
// task when served by a disaggregated pair.
class Job {
 public:
  static Job colocated(std::string request_id, TeId te);
  static Job disaggregated(std::string request_id, TeId prefill_te,
                           TeId decode_te);

  const std::string& request_id() const { return request_id_; }
  JobKind kind() const { return kind_; }
  const std::vector<Task>& tasks() const { return tasks_; }
  bool disaggregated() const { return tasks_.size() == 2; }

  Task& prefill_task();
  Task& decode_task();
  Task& colocated_task();

  // Enforces the decode-after-prefill ordering.
  void mark(TaskKind kind, TaskState state);
  bool done() const;

 private:
  std::string request_id_;
  JobKind kind_ = JobKind::kChatServing;
  std::vector<Task> tasks_;
};

}  // namespace workload
}  // namespace servesim
