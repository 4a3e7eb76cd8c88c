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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "servesim/sim/simulator.h"

namespace servesim::distflow {

enum class LinkKind : int32_t { kHccs, kRoce, kPcie };

std::string_view link_kind_name(LinkKind kind);
LinkKind link_kind_from_name(std::string_view name);

struct LinkSpec {
  LinkKind kind = LinkKind::kHccs;
  double bandwidth = 0.0;  // bytes per second, unidirectional
  Micros base_latency = 0;
};

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
constexpr double kMiB = 1024.0 * 1024.0;

struct LinkTable {
  LinkSpec hccs{LinkKind::kHccs, 200e9, 10};
  LinkSpec roce{LinkKind::kRoce, 25e9, 10};  // 200 Gbps
  LinkSpec pcie{LinkKind::kPcie, 32.0 * kGiB, 10};

  const LinkSpec& get(LinkKind kind) const;
  LinkSpec& get(LinkKind kind);
};

void validate(const LinkTable& links);
LinkTable link_table_from_json(const nlohmann::json& j);
nlohmann::json link_table_to_json(const LinkTable& links);

using EndpointId = int64_t;
using HostId = int64_t;
using TicketId = int64_t;

enum class EndpointKind : int32_t { kNpu, kDram };

// Endpoints placed on hosts. Unless a pair is overridden:
//   NPU<->NPU same host            HCCS
//   NPU<->NPU across hosts         RoCE, or HCCS when scale_up_across_hosts
//   DRAM<->NPU same host           PCIe, one shared lane set per host
//   anything else                  RoCE
class Topology {
 public:
  void add_endpoint(EndpointId id, HostId host, EndpointKind kind);
  void set_link(EndpointId a, EndpointId b, LinkKind kind);
  void set_scale_up_across_hosts(bool on) { scale_up_across_hosts_ = on; }
  bool scale_up_across_hosts() const { return scale_up_across_hosts_; }

  bool has_endpoint(EndpointId id) const { return endpoints_.count(id) > 0; }
  HostId host_of(EndpointId id) const;
  EndpointKind kind_of(EndpointId id) const;
  LinkKind link_between(EndpointId src, EndpointId dst) const;

 private:
  struct Endpoint {
    HostId host;
    EndpointKind kind;
  };
  std::map<EndpointId, Endpoint> endpoints_;
  std::map<std::pair<EndpointId, EndpointId>, LinkKind> overrides_;
  bool scale_up_across_hosts_ = false;
};

struct ChannelGroup {
  int64_t id = -1;
  std::vector<EndpointId> members;  // sorted, unique
  bool contains(EndpointId e) const;
};

enum class TransferStatus : int32_t { kPending, kDone };

struct TransferTicket {
  TicketId id = -1;
  int64_t bytes = 0;
  EndpointId src = -1;
  std::vector<EndpointId> dsts;
  Micros started_at = 0;
  // Projection under current sharing; final once status is kDone.
  Micros completes_at = 0;
  TransferStatus status = TransferStatus::kPending;
};

// Fluid cost model for tensor movement. Every flow occupies one or more
// physical links; a link's bandwidth is split evenly among the flows on it
// and a flow advances at the smallest share it gets. Rates are recomputed
// whenever a flow starts or finishes its payload. The base latency is paid
// after the payload drains.
class Fabric {
 public:
  using Callback = std::function<void(const TransferTicket&)>;

  Fabric(sim::Simulator& sim, Topology topology, LinkTable links = {});
  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  const Topology& topology() const { return topology_; }
  Topology& mutable_topology() { return topology_; }
  const LinkTable& links() const { return links_; }

  // Idempotent: the same member set yields the same group id.
  ChannelGroup link_cluster(std::span<const EndpointId> endpoints);

  TicketId transfer(const ChannelGroup& group, EndpointId src, EndpointId dst,
                    int64_t bytes, Callback on_done = {});
  // Tree broadcast: the payload drains once at the slowest involved share,
  // then base_latency * ceil(log2(|dsts| + 1)) of setup is paid.
  TicketId broadcast(const ChannelGroup& group, EndpointId src,
                     std::span<const EndpointId> dsts, int64_t bytes,
                     Callback on_done = {});

  const TransferTicket& ticket(TicketId id) const;
  size_t active_flows() const { return flows_.size(); }

  // Uncontended closed forms.
  Micros estimate_transfer(EndpointId src, EndpointId dst,
                           int64_t bytes) const;
  Micros estimate_broadcast(EndpointId src, std::span<const EndpointId> dsts,
                            int64_t bytes) const;

 private:
  // (kind, a, b): PCIe keys on (host, -1); scale links on the directed pair.
  using ResourceKey = std::tuple<LinkKind, int64_t, int64_t>;

  struct Resource {
    double bandwidth = 0.0;
    int32_t flows = 0;
  };
  struct Flow {
    TicketId ticket = -1;
    double remaining = 0.0;  // bytes
    double rate = 0.0;       // bytes per microsecond
    Micros tail = 0;
    std::vector<ResourceKey> resources;
    Callback on_done;
  };

  ResourceKey resource_for(EndpointId src, EndpointId dst) const;
  TicketId start_flow(EndpointId src, std::vector<EndpointId> dsts,
                      int64_t bytes, std::vector<ResourceKey> resources,
                      Micros tail, Callback on_done);
  void advance();
  void recompute_and_reschedule();
  void on_wakeup();

  sim::Simulator& sim_;
  Topology topology_;
  LinkTable links_;
  std::map<std::vector<EndpointId>, int64_t> groups_;
  std::map<ResourceKey, Resource> resources_;
  std::map<TicketId, Flow> flows_;
  std::map<TicketId, TransferTicket> tickets_;
  TicketId next_ticket_ = 0;
  Micros last_advance_ = 0;
  std::optional<uint64_t> wakeup_seq_;
};

}  // namespace servesim::distflow
