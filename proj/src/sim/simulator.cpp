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

#include "servesim/sim/simulator.h"

#include <algorithm>
#include <cassert>
#include <limits>
#include <string>

#include "servesim/common/error.h"

namespace servesim::sim {

std::string_view event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kRequestArrival:
      return "RequestArrival";
    case EventKind::kEngineStep:
      return "EngineStep";
    case EventKind::kTransferComplete:
      return "TransferComplete";
    case EventKind::kPopulateComplete:
      return "PopulateComplete";
    case EventKind::kScaleStepComplete:
      return "ScaleStepComplete";
    case EventKind::kTeReady:
      return "TEReady";
    case EventKind::kTeFailure:
      return "TEFailure";
  }
  return "Unknown";
}

void SimClock::advance_to(Micros t) {
  SERVESIM_CHECK(t >= now_, ErrorCode::kPastEvent,
                 "clock cannot move from " + std::to_string(now_) + " to " +
                     std::to_string(t));
  now_ = t;
}

Event Simulator::schedule(Micros fire_at, EventKind kind, Handler handler) {
  SERVESIM_CHECK(fire_at >= now(), ErrorCode::kPastEvent,
                 "fire_at " + std::to_string(fire_at) + " < now " +
                     std::to_string(now()));
  Event ev{fire_at, next_seq_++, kind};
  heap_.push_back(Entry{ev, std::move(handler)});
  live_.insert(ev.seq);
  std::push_heap(heap_.begin(), heap_.end(), Later{});
  return ev;
}

void Simulator::cancel(uint64_t seq) {
  if (live_.erase(seq) > 0) {
    cancelled_.insert(seq);
  }
}

bool Simulator::step_one(Micros t_end) {
  while (!heap_.empty()) {
    if (heap_.front().event.fire_at > t_end) {
      return false;
    }
    std::pop_heap(heap_.begin(), heap_.end(), Later{});
    Entry entry = std::move(heap_.back());
    heap_.pop_back();
    if (auto it = cancelled_.find(entry.event.seq); it != cancelled_.end()) {
      cancelled_.erase(it);
      continue;
    }
    live_.erase(entry.event.seq);
    assert(entry.event.fire_at > last_.fire_at ||
           (entry.event.fire_at == last_.fire_at &&
            entry.event.seq > last_.seq) ||
           processed_ == 0);
    last_ = entry.event;
    clock_.advance_to(entry.event.fire_at);
    for (uint64_t word : {static_cast<uint64_t>(entry.event.fire_at),
                          entry.event.seq,
                          static_cast<uint64_t>(entry.event.kind)}) {
      for (int i = 0; i < 8; ++i) {
        digest_ ^= (word >> (8 * i)) & 0xff;
        digest_ *= 1099511628211ULL;
      }
    }
    ++processed_;
    if (record_trace_) {
      trace_.push_back(entry.event);
    }
    if (entry.handler) {
      entry.handler();
    }
    return true;
  }
  return false;
}

const MetricsStore& Simulator::run_until(Micros t_end) {
  SERVESIM_CHECK(t_end >= now(), ErrorCode::kPastEvent,
                 "run_until target precedes the clock");
  while (step_one(t_end)) {
  }
  clock_.advance_to(t_end);
  return metrics_;
}

const MetricsStore& Simulator::run() {
  while (step_one(std::numeric_limits<Micros>::max())) {
  }
  return metrics_;
}

}  // namespace servesim::sim
