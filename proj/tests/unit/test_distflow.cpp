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

#include <vector>

#include "servesim/common/error.h"
#include "servesim/distflow/fabric.h"
#include "servesim/sim/simulator.h"

namespace servesim::distflow {
namespace {

// 1000 bytes/us on every medium keeps the closed forms readable.
LinkTable slow_links() {
  LinkTable t;
  t.hccs = {LinkKind::kHccs, 1e9, 10};
  t.roce = {LinkKind::kRoce, 1e9, 20};
  t.pcie = {LinkKind::kPcie, 1e9, 5};
  return t;
}

struct Rig {
  sim::Simulator sim;
  std::unique_ptr<Fabric> fabric;
  ChannelGroup group;

  explicit Rig(bool across = false) {
    Topology topo;
    for (EndpointId e : {0, 1, 2, 3}) {
      topo.add_endpoint(e, 0, EndpointKind::kNpu);
    }
    topo.add_endpoint(10, 1, EndpointKind::kNpu);
    topo.add_endpoint(99, 0, EndpointKind::kDram);
    topo.set_scale_up_across_hosts(across);
    fabric = std::make_unique<Fabric>(sim, std::move(topo), slow_links());
    std::vector<EndpointId> all{0, 1, 2, 3, 10, 99};
    group = fabric->link_cluster(all);
  }

  Micros done_at(EndpointId src, EndpointId dst, int64_t bytes,
                 Micros start = 0) {
    auto out = std::make_shared<Micros>(-1);
    sim.schedule(start, sim::EventKind::kEngineStep, [=, this] {
      fabric->transfer(group, src, dst, bytes,
                       [=, this](const TransferTicket&) { *out = sim.now(); });
    });
    results.push_back(out);
    return 0;
  }
  std::vector<std::shared_ptr<Micros>> results;
};

TEST(TopologyTest, LinkKinds) {
  Rig rig;
  const auto& topo = rig.fabric->topology();
  EXPECT_EQ(topo.link_between(0, 1), LinkKind::kHccs);
  EXPECT_EQ(topo.link_between(0, 10), LinkKind::kRoce);
  EXPECT_EQ(topo.link_between(99, 0), LinkKind::kPcie);
  Rig across(true);
  EXPECT_EQ(across.fabric->topology().link_between(0, 10), LinkKind::kHccs);
}

TEST(FabricTest, SingleFlowClosedForm) {
  Rig rig;
  rig.done_at(0, 1, 1'000'000);
  rig.sim.run();
  EXPECT_EQ(*rig.results[0], 1000 + 10);
  EXPECT_EQ(rig.fabric->estimate_transfer(0, 1, 1'000'000), 1010);
  EXPECT_EQ(rig.fabric->estimate_transfer(0, 10, 1'000'000), 1020);
}

// Two equal flows on one link: each drains at half rate.
TEST(FabricTest, TwoSimultaneousFlowsShareEvenly) {
  Rig rig;
  rig.done_at(0, 1, 1'000'000);
  rig.done_at(0, 1, 1'000'000);
  rig.sim.run();
  EXPECT_EQ(*rig.results[0], 2000 + 10);
  EXPECT_EQ(*rig.results[1], 2000 + 10);
}

// A runs alone for 500us (half sent), then shares; A drains at 1500, after
// which B (half sent) finishes alone at 2000.
TEST(FabricTest, StaggeredFlowsMatchFluidModel) {
  Rig rig;
  rig.done_at(0, 1, 1'000'000, 0);
  rig.done_at(0, 1, 1'000'000, 500);
  rig.sim.run();
  EXPECT_EQ(*rig.results[0], 1500 + 10);
  EXPECT_EQ(*rig.results[1], 2000 + 10);
}

TEST(FabricTest, DistinctPairsDoNotContend) {
  Rig rig;
  rig.done_at(0, 1, 1'000'000);
  rig.done_at(0, 2, 1'000'000);
  rig.sim.run();
  EXPECT_EQ(*rig.results[0], 1010);
  EXPECT_EQ(*rig.results[1], 1010);
}

TEST(FabricTest, PcieIsSharedPerHost) {
  Rig rig;
  rig.done_at(99, 0, 1'000'000);
  rig.done_at(99, 1, 1'000'000);
  rig.sim.run();
  EXPECT_EQ(*rig.results[0], 2000 + 5);
  EXPECT_EQ(*rig.results[1], 2000 + 5);
}

TEST(FabricTest, BroadcastPaysTreeSetup) {
  Rig rig;
  Micros done = -1;
  const std::vector<EndpointId> dsts{1, 2, 3};
  rig.fabric->broadcast(rig.group, 0, dsts, 1'000'000,
                        [&](const TransferTicket&) { done = rig.sim.now(); });
  rig.sim.run();
  // ceil(log2(4)) = 2 setup rounds.
  EXPECT_EQ(done, 1000 + 2 * 10);
  EXPECT_EQ(rig.fabric->estimate_broadcast(0, dsts, 1'000'000), done);
}

TEST(FabricTest, TicketProjectionBecomesFinal) {
  Rig rig;
  auto id = rig.fabric->transfer(rig.group, 0, 1, 1'000'000);
  EXPECT_EQ(rig.fabric->ticket(id).completes_at, 1010);
  EXPECT_EQ(rig.fabric->ticket(id).status, TransferStatus::kPending);
  rig.sim.run();
  EXPECT_EQ(rig.fabric->ticket(id).status, TransferStatus::kDone);
}

TEST(FabricTest, Errors) {
  Rig rig;
  const std::vector<EndpointId> pair{0, 1};
  auto small = rig.fabric->link_cluster(pair);
  try {
    rig.fabric->transfer(small, 0, 2, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotInGroup);
  }
  const std::vector<EndpointId> bad{0, 555};
  try {
    rig.fabric->link_cluster(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownEndpoint);
  }
  try {
    rig.fabric->ticket(42);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownTicket);
  }
  EXPECT_EQ(rig.fabric->link_cluster(pair).id, small.id);
}

}  // namespace
}  // namespace servesim::distflow
