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

#include "servesim/workload/request.h"

#include "servesim/common/error.h"

namespace servesim::workload {

void validate(const Request& req) {
  SERVESIM_CHECK(!req.id.empty(), ErrorCode::kInvalidSpec,
                 "request id must be non-empty");
  SERVESIM_CHECK(!req.prompt_tokens.empty(), ErrorCode::kInvalidSpec,
                 "request " + req.id + " has an empty prompt");
  SERVESIM_CHECK(req.true_decode_len >= 1, ErrorCode::kInvalidSpec,
                 "request " + req.id + " needs decode_len >= 1");
  SERVESIM_CHECK(req.arrival >= 0, ErrorCode::kInvalidSpec,
                 "request " + req.id + " has a negative arrival");
  for (TokenId t : req.prompt_tokens) {
    SERVESIM_CHECK(t >= 0, ErrorCode::kInvalidSpec,
                   "request " + req.id + " has a negative token id");
  }
  if (req.prefix) {
    SERVESIM_CHECK(req.prefix->length >= 0 &&
                       req.prefix->length <= req.prompt_len(),
                   ErrorCode::kInvalidSpec,
                   "request " + req.id + " prefix exceeds prompt");
  }
}

std::string_view task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kPrefill:
      return "prefill";
    case TaskKind::kDecode:
      return "decode";
    case TaskKind::kColocated:
      return "colocated";
  }
  return "unknown";
}

Job Job::colocated(std::string request_id, TeId te) {
  Job job;
  job.request_id_ = std::move(request_id);
  job.tasks_.push_back(Task{TaskKind::kColocated, te, TaskState::kQueued});
  return job;
}

Job Job::disaggregated(std::string request_id, TeId prefill_te,
                       TeId decode_te) {
  Job job;
  job.request_id_ = std::move(request_id);
  job.tasks_.push_back(Task{TaskKind::kPrefill, prefill_te, TaskState::kQueued});
  job.tasks_.push_back(Task{TaskKind::kDecode, decode_te, TaskState::kQueued});
  return job;
}

Task& Job::prefill_task() {
  SERVESIM_CHECK(disaggregated(), ErrorCode::kInvalidArgument,
                 "colocated job has no prefill task");
  return tasks_[0];
}

Task& Job::decode_task() {
  SERVESIM_CHECK(disaggregated(), ErrorCode::kInvalidArgument,
                 "colocated job has no decode task");
  return tasks_[1];
}

Task& Job::colocated_task() {
  SERVESIM_CHECK(!disaggregated(), ErrorCode::kInvalidArgument,
                 "disaggregated job has no colocated task");
  return tasks_[0];
}

void Job::mark(TaskKind kind, TaskState state) {
  for (auto& t : tasks_) {
    if (t.kind != kind) {
      continue;
    }
    if (kind == TaskKind::kDecode &&
        (state == TaskState::kReady || state == TaskState::kRunning)) {
      SERVESIM_CHECK(tasks_[0].state == TaskState::kDone,
                     ErrorCode::kNotReady,
                     "decode task of " + request_id_ +
                         " cannot start before prefill completes");
    }
    t.state = state;
    return;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "job " + request_id_ + " has no task of kind " +
                  std::string(task_kind_name(kind)));
}

bool Job::done() const {
  for (const auto& t : tasks_) {
    if (t.state != TaskState::kDone) {
      return false;
    }
  }
  return true;
}

}  // namespace servesim::workload
