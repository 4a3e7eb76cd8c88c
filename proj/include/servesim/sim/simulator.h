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
#include <string_view>
#include <unordered_set>
#include <vector>

#include "servesim/sim/metrics.h"
#include "servesim/sim/time.h"

namespace servesim::sim {

enum class EventKind : int32_t {
  kRequestArrival,
  kEngineStep,
  kTransferComplete,
  kPopulateComplete,
  kScaleStepComplete,
  kTeReady,
  kTeFailure,
};

std::string_view event_kind_name(EventKind kind);

struct Event {
  Micros fire_at = 0;
  uint64_t seq = 0;
  EventKind kind = EventKind::kEngineStep;
};

// Virtual clock. Only moves forward.
class SimClock {
 public:
  Micros now() const { return now_; }
  void advance_to(Micros t);

 private:
  Micros now_ = 0;
};

// Deterministic discrete-event loop. Events fire in (fire_at, seq) order and
// seq is assigned at schedule time, so insertion order breaks ties.
class Simulator {
 public:
  using Handler = std::function<void()>;

  Simulator() = default;
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  Micros now() const { return clock_.now(); }
  const SimClock& clock() const { return clock_; }
  SimClock& mutable_clock() { return clock_; }

  // Throws Error(kPastEvent) when fire_at < now().
  Event schedule(Micros fire_at, EventKind kind, Handler handler);
  Event schedule_after(Micros delay, EventKind kind, Handler handler) {
    return schedule(now() + delay, kind, std::move(handler));
  }
  // A cancelled event is dropped silently when it reaches the queue head.
  void cancel(uint64_t seq);

  // Processes every event with fire_at <= t_end, then parks the clock at
  // t_end.
  const MetricsStore& run_until(Micros t_end);
  // Processes events until the queue drains; the clock stays at the last
  // processed event.
  const MetricsStore& run();

  bool idle() const { return live_.empty(); }
  size_t pending() const { return live_.size(); }
  uint64_t processed_events() const { return processed_; }
  // FNV-1a over the (fire_at, seq, kind) of every processed event.
  uint64_t trace_digest() const { return digest_; }

  void set_record_trace(bool on) { record_trace_ = on; }
  const std::vector<Event>& trace() const { return trace_; }

  MetricsStore& metrics() { return metrics_; }
  const MetricsStore& metrics() const { return metrics_; }

 private:
  struct Entry {
    Event event;
    Handler handler;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.event.fire_at != b.event.fire_at) {
        return a.event.fire_at > b.event.fire_at;
      }
      return a.event.seq > b.event.seq;
    }
  };

  bool step_one(Micros t_end);

  SimClock clock_;
  uint64_t next_seq_ = 0;
  uint64_t processed_ = 0;
  uint64_t digest_ = 14695981039346656037ULL;
  Event last_{-1, 0, EventKind::kEngineStep};
  bool record_trace_ = false;
  std::vector<Event> trace_;
  std::vector<Entry> heap_;
  std::unordered_set<uint64_t> live_;
  std::unordered_set<uint64_t> cancelled_;
  MetricsStore metrics_;
};

}  // namespace servesim::sim
