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

#include <sstream>
#include <vector>

#include "servesim/common/error.h"
#include "servesim/sim/metrics.h"
#include "servesim/sim/simulator.h"

namespace servesim::sim {
namespace {

TEST(SimulatorTest, FiresInTimeThenInsertionOrder) {
  Simulator sim;
  std::vector<int> order;
  sim.schedule(20, EventKind::kEngineStep, [&] { order.push_back(3); });
  sim.schedule(10, EventKind::kEngineStep, [&] { order.push_back(1); });
  sim.schedule(10, EventKind::kRequestArrival, [&] { order.push_back(2); });
  sim.run();
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(sim.now(), 20);
  EXPECT_EQ(sim.processed_events(), 3u);
}

TEST(SimulatorTest, PastEventThrows) {
  Simulator sim;
  sim.schedule(50, EventKind::kEngineStep, {});
  sim.run();
  try {
    sim.schedule(49, EventKind::kEngineStep, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPastEvent);
  }
}

TEST(SimulatorTest, HandlersMayScheduleAtNow) {
  Simulator sim;
  std::vector<Micros> seen;
  sim.schedule(5, EventKind::kEngineStep, [&] {
    sim.schedule_after(0, EventKind::kEngineStep,
                       [&] { seen.push_back(sim.now()); });
  });
  sim.run();
  EXPECT_EQ(seen, (std::vector<Micros>{5}));
}

TEST(SimulatorTest, CancelledEventIsSkipped) {
  Simulator sim;
  int fired = 0;
  auto ev = sim.schedule(10, EventKind::kEngineStep, [&] { ++fired; });
  sim.schedule(11, EventKind::kEngineStep, [&] { ++fired; });
  sim.cancel(ev.seq);
  EXPECT_EQ(sim.pending(), 1u);
  sim.run();
  EXPECT_EQ(fired, 1);
  EXPECT_EQ(sim.processed_events(), 1u);
}

TEST(SimulatorTest, RunUntilParksClock) {
  Simulator sim;
  int fired = 0;
  sim.schedule(10, EventKind::kEngineStep, [&] { ++fired; });
  sim.schedule(30, EventKind::kEngineStep, [&] { ++fired; });
  sim.run_until(20);
  EXPECT_EQ(fired, 1);
  EXPECT_EQ(sim.now(), 20);
  EXPECT_FALSE(sim.idle());
  sim.run();
  EXPECT_EQ(fired, 2);
  EXPECT_TRUE(sim.idle());
}

TEST(SimulatorTest, DigestIsReproducible) {
  auto run = [](bool extra) {
    Simulator sim;
    for (int i = 0; i < 100; ++i) {
      sim.schedule((i * 37) % 101, EventKind::kEngineStep, {});
    }
    if (extra) {
      sim.schedule(7, EventKind::kTeReady, {});
    }
    sim.run();
    return sim.trace_digest();
  };
  EXPECT_EQ(run(false), run(false));
  EXPECT_NE(run(false), run(true));
}

TEST(MetricsTest, NearestRankPercentile) {
  std::vector<double> v{15, 20, 35, 40, 50};
  EXPECT_EQ(percentile_nearest_rank(v, 30), 20);
  EXPECT_EQ(percentile_nearest_rank(v, 40), 20);
  EXPECT_EQ(percentile_nearest_rank(v, 50), 35);
  EXPECT_EQ(percentile_nearest_rank(v, 100), 50);
  EXPECT_EQ(percentile_nearest_rank({}, 50), 0.0);
}

TEST(MetricsTest, RecordDerivedTimes) {
  MetricsStore m;
  auto h = m.on_arrival("r0", 100, 8);
  m.on_token(h, 400);
  m.on_token(h, 500);
  m.on_token(h, 700);
  m.on_completed(h, 700);
  const auto& r = m.record(h);
  EXPECT_EQ(*r.ttft(), 300);
  EXPECT_DOUBLE_EQ(*r.tpot(), 150.0);
  EXPECT_EQ(*r.jct(), 600);
  auto counts = m.status_counts();
  EXPECT_EQ(counts.completed, 1);
  EXPECT_EQ(counts.total(), 1);
}

TEST(MetricsTest, CsvLeavesMissingCellsEmpty) {
  MetricsStore m;
  m.on_arrival("a", 0, 4);
  std::ostringstream os;
  m.write_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "request_id,arrival_us,ttft_us,tpot_us,jct_us,te_id,te_kind,"
            "cached_prefix_tokens");
  EXPECT_NE(csv.find("a,0,,,,"), std::string::npos);
}

}  // namespace
}  // namespace servesim::sim
