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

#include "servesim/distflow/fabric.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "servesim/common/error.h"

namespace servesim::distflow {

std::string_view link_kind_name(LinkKind kind) {
  switch (kind) {
    case LinkKind::kHccs:
      return "hccs";
    case LinkKind::kRoce:
      return "roce";
    case LinkKind::kPcie:
      return "pcie";
  }
  return "unknown";
}

LinkKind link_kind_from_name(std::string_view name) {
  if (name == "hccs") {
    return LinkKind::kHccs;
  }
  if (name == "roce") {
    return LinkKind::kRoce;
  }
  if (name == "pcie") {
    return LinkKind::kPcie;
  }
  throw Error(ErrorCode::kConfigError,
              "unknown link kind '" + std::string(name) + "'");
}

const LinkSpec& LinkTable::get(LinkKind kind) const {
  switch (kind) {
    case LinkKind::kHccs:
      return hccs;
    case LinkKind::kRoce:
      return roce;
    case LinkKind::kPcie:
      return pcie;
  }
  return roce;
}

LinkSpec& LinkTable::get(LinkKind kind) {
  return const_cast<LinkSpec&>(std::as_const(*this).get(kind));
}

void validate(const LinkTable& links) {
  for (const auto* l : {&links.hccs, &links.roce, &links.pcie}) {
    SERVESIM_CHECK(l->bandwidth > 0, ErrorCode::kConfigError,
                   std::string(link_kind_name(l->kind)) +
                       " bandwidth must be positive");
    SERVESIM_CHECK(l->base_latency >= 0, ErrorCode::kConfigError,
                   "link latency must be non-negative");
  }
}

LinkTable link_table_from_json(const nlohmann::json& j) {
  LinkTable t;
  for (auto kind : {LinkKind::kHccs, LinkKind::kRoce, LinkKind::kPcie}) {
    const std::string name(link_kind_name(kind));
    if (!j.contains(name)) {
      continue;
    }
    auto& spec = t.get(kind);
    spec.bandwidth = j[name].value("bandwidth_bytes_per_s", spec.bandwidth);
    spec.base_latency = j[name].value("base_latency_us", spec.base_latency);
  }
  validate(t);
  return t;
}

nlohmann::json link_table_to_json(const LinkTable& links) {
  nlohmann::json j;
  for (const auto* l : {&links.hccs, &links.roce, &links.pcie}) {
    j[std::string(link_kind_name(l->kind))] = {
        {"bandwidth_bytes_per_s", l->bandwidth},
        {"base_latency_us", l->base_latency}};
  }
  return j;
}

void Topology::add_endpoint(EndpointId id, HostId host, EndpointKind kind) {
  endpoints_[id] = Endpoint{host, kind};
}

void Topology::set_link(EndpointId a, EndpointId b, LinkKind kind) {
  overrides_[{std::min(a, b), std::max(a, b)}] = kind;
}

HostId Topology::host_of(EndpointId id) const {
  auto it = endpoints_.find(id);
  SERVESIM_CHECK(it != endpoints_.end(), ErrorCode::kUnknownEndpoint,
                 "endpoint " + std::to_string(id));
  return it->second.host;
}

EndpointKind Topology::kind_of(EndpointId id) const {
  auto it = endpoints_.find(id);
  SERVESIM_CHECK(it != endpoints_.end(), ErrorCode::kUnknownEndpoint,
                 "endpoint " + std::to_string(id));
  return it->second.kind;
}

LinkKind Topology::link_between(EndpointId src, EndpointId dst) const {
  if (auto it = overrides_.find({std::min(src, dst), std::max(src, dst)});
      it != overrides_.end()) {
    return it->second;
  }
  const auto sk = kind_of(src);
  const auto dk = kind_of(dst);
  const bool same_host = host_of(src) == host_of(dst);
  if (sk == EndpointKind::kNpu && dk == EndpointKind::kNpu) {
    return (same_host || scale_up_across_hosts_) ? LinkKind::kHccs
                                                 : LinkKind::kRoce;
  }
  if (same_host && sk != dk) {
    return LinkKind::kPcie;
  }
  return LinkKind::kRoce;
}

bool ChannelGroup::contains(EndpointId e) const {
  return std::binary_search(members.begin(), members.end(), e);
}

Fabric::Fabric(sim::Simulator& sim, Topology topology, LinkTable links)
    : sim_(sim), topology_(std::move(topology)), links_(links) {
  validate(links_);
  last_advance_ = sim_.now();
}

ChannelGroup Fabric::link_cluster(std::span<const EndpointId> endpoints) {
  std::vector<EndpointId> members(endpoints.begin(), endpoints.end());
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  SERVESIM_CHECK(members.size() >= 2, ErrorCode::kInvalidArgument,
                 "a channel group needs at least two endpoints");
  for (EndpointId e : members) {
    SERVESIM_CHECK(topology_.has_endpoint(e), ErrorCode::kUnknownEndpoint,
                   "endpoint " + std::to_string(e));
  }
  auto [it, inserted] =
      groups_.emplace(members, static_cast<int64_t>(groups_.size()));
  return ChannelGroup{it->second, std::move(members)};
}

Fabric::ResourceKey Fabric::resource_for(EndpointId src, EndpointId dst) const {
  const LinkKind kind = topology_.link_between(src, dst);
  if (kind == LinkKind::kPcie) {
    return {kind, topology_.host_of(src), -1};
  }
  return {kind, src, dst};
}

TicketId Fabric::transfer(const ChannelGroup& group, EndpointId src,
                          EndpointId dst, int64_t bytes, Callback on_done) {
  SERVESIM_CHECK(group.contains(src) && group.contains(dst),
                 ErrorCode::kNotInGroup,
                 "transfer " + std::to_string(src) + "->" +
                     std::to_string(dst) + " outside group " +
                     std::to_string(group.id));
  SERVESIM_CHECK(bytes > 0, ErrorCode::kInvalidArgument,
                 "transfer needs bytes > 0");
  const auto res = resource_for(src, dst);
  const Micros tail = links_.get(std::get<0>(res)).base_latency;
  return start_flow(src, {dst}, bytes, {res}, tail, std::move(on_done));
}

TicketId Fabric::broadcast(const ChannelGroup& group, EndpointId src,
                           std::span<const EndpointId> dsts, int64_t bytes,
                           Callback on_done) {
  SERVESIM_CHECK(!dsts.empty(), ErrorCode::kInvalidArgument,
                 "broadcast needs at least one destination");
  SERVESIM_CHECK(bytes > 0, ErrorCode::kInvalidArgument,
                 "broadcast needs bytes > 0");
  SERVESIM_CHECK(group.contains(src), ErrorCode::kNotInGroup,
                 "broadcast source outside group");
  std::vector<ResourceKey> resources;
  Micros latency = 0;
  for (EndpointId d : dsts) {
    SERVESIM_CHECK(group.contains(d), ErrorCode::kNotInGroup,
                   "broadcast destination " + std::to_string(d) +
                       " outside group");
    auto res = resource_for(src, d);
    latency = std::max(latency, links_.get(std::get<0>(res)).base_latency);
    if (std::find(resources.begin(), resources.end(), res) == resources.end()) {
      resources.push_back(res);
    }
  }
  const auto depth = static_cast<Micros>(
      std::ceil(std::log2(static_cast<double>(dsts.size()) + 1.0)));
  return start_flow(src, {dsts.begin(), dsts.end()}, bytes,
                    std::move(resources), latency * depth, std::move(on_done));
}

const TransferTicket& Fabric::ticket(TicketId id) const {
  auto it = tickets_.find(id);
  SERVESIM_CHECK(it != tickets_.end(), ErrorCode::kUnknownTicket,
                 "transfer ticket " + std::to_string(id));
  return it->second;
}

Micros Fabric::estimate_transfer(EndpointId src, EndpointId dst,
                                 int64_t bytes) const {
  const auto& link = links_.get(topology_.link_between(src, dst));
  return link.base_latency +
         ceil_micros(static_cast<double>(bytes) / link.bandwidth * 1e6);
}

Micros Fabric::estimate_broadcast(EndpointId src,
                                  std::span<const EndpointId> dsts,
                                  int64_t bytes) const {
  double min_bw = std::numeric_limits<double>::infinity();
  Micros latency = 0;
  for (EndpointId d : dsts) {
    const auto& link = links_.get(topology_.link_between(src, d));
    min_bw = std::min(min_bw, link.bandwidth);
    latency = std::max(latency, link.base_latency);
  }
  const auto depth = static_cast<Micros>(
      std::ceil(std::log2(static_cast<double>(dsts.size()) + 1.0)));
  return latency * depth +
         ceil_micros(static_cast<double>(bytes) / min_bw * 1e6);
}

TicketId Fabric::start_flow(EndpointId src, std::vector<EndpointId> dsts,
                            int64_t bytes, std::vector<ResourceKey> resources,
                            Micros tail, Callback on_done) {
  advance();
  const TicketId id = next_ticket_++;
  TransferTicket t;
  t.id = id;
  t.bytes = bytes;
  t.src = src;
  t.dsts = std::move(dsts);
  t.started_at = sim_.now();
  tickets_.emplace(id, std::move(t));

  for (const auto& key : resources) {
    auto [it, inserted] = resources_.try_emplace(key);
    if (inserted) {
      it->second.bandwidth = links_.get(std::get<0>(key)).bandwidth;
    }
    ++it->second.flows;
  }
  Flow f;
  f.ticket = id;
  f.remaining = static_cast<double>(bytes);
  f.tail = tail;
  f.resources = std::move(resources);
  f.on_done = std::move(on_done);
  flows_.emplace(id, std::move(f));
  recompute_and_reschedule();
  return id;
}

void Fabric::advance() {
  const Micros now = sim_.now();
  const double dt = static_cast<double>(now - last_advance_);
  if (dt > 0) {
    for (auto& [id, f] : flows_) {
      f.remaining -= f.rate * dt;
    }
  }
  last_advance_ = now;
}

void Fabric::recompute_and_reschedule() {
  const Micros now = sim_.now();
  Micros next = std::numeric_limits<Micros>::max();
  for (auto& [id, f] : flows_) {
    double rate = std::numeric_limits<double>::infinity();
    for (const auto& key : f.resources) {
      const auto& r = resources_.at(key);
      rate = std::min(rate, r.bandwidth / 1e6 / static_cast<double>(r.flows));
    }
    f.rate = rate;
    const Micros payload = ceil_micros(std::max(0.0, f.remaining) / rate);
    tickets_.at(id).completes_at = now + payload + f.tail;
    next = std::min(next, now + payload);
  }
  if (wakeup_seq_) {
    sim_.cancel(*wakeup_seq_);
    wakeup_seq_.reset();
  }
  if (!flows_.empty()) {
    wakeup_seq_ = sim_.schedule(next, sim::EventKind::kTransferComplete,
                                [this] { on_wakeup(); })
                      .seq;
  }
}

void Fabric::on_wakeup() {
  wakeup_seq_.reset();
  advance();
  std::vector<TicketId> drained;
  for (const auto& [id, f] : flows_) {
    if (f.remaining <= std::max(1e-6, f.rate * 1e-3)) {
      drained.push_back(id);
    }
  }
  for (TicketId id : drained) {
    Flow f = std::move(flows_.at(id));
    flows_.erase(id);
    for (const auto& key : f.resources) {
      if (--resources_.at(key).flows == 0) {
        resources_.erase(key);
      }
    }
    auto& t = tickets_.at(id);
    t.completes_at = sim_.now() + f.tail;
    sim_.schedule(t.completes_at, sim::EventKind::kTransferComplete,
                  [this, id, cb = std::move(f.on_done)] {
                    auto& done = tickets_.at(id);
                    done.status = TransferStatus::kDone;
                    if (cb) {
                      cb(done);
                    }
                  });
  }
  recompute_and_reschedule();
}

}  // namespace servesim::distflow
