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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "servesim/distflow/fabric.h"
#include "servesim/engine/engine.h"
#include "servesim/sim/simulator.h"
#include "servesim/workload/request.h"

namespace servesim::testing {

inline workload::Request make_request(const std::string& id, Micros arrival,
                                      int64_t prompt, int64_t decode,
                                      TokenId first_token = 0) {
  workload::Request r;
  r.id = id;
  r.arrival = arrival;
  r.prompt_tokens.resize(static_cast<size_t>(prompt));
  for (int64_t i = 0; i < prompt; ++i) {
    r.prompt_tokens[static_cast<size_t>(i)] =
        first_token + static_cast<TokenId>(i);
  }
  r.true_decode_len = decode;
  return r;
}

// One or more TEs on a single host with metrics wired through hooks.
struct EngineRig {
  sim::Simulator sim;
  std::unique_ptr<distflow::Fabric> fabric;
  distflow::ChannelGroup group;
  std::map<TeId, std::unique_ptr<engine::TaskExecutor>> tes;
  std::vector<std::unique_ptr<workload::Request>> requests;
  std::map<std::string, size_t> handles;
  std::vector<std::string> rejected;

  explicit EngineRig(distflow::LinkTable links = {}) {
    distflow::Topology topo;
    for (distflow::EndpointId e = 0; e < 8; ++e) {
      topo.add_endpoint(e, 0, distflow::EndpointKind::kNpu);
    }
    topo.add_endpoint(1023, 0, distflow::EndpointKind::kDram);
    fabric = std::make_unique<distflow::Fabric>(sim, std::move(topo), links);
    std::vector<distflow::EndpointId> all{0, 1, 2, 3, 4, 5, 6, 7, 1023};
    group = fabric->link_cluster(all);
  }

  engine::TaskExecutor& add(TeId id, const engine::EngineConfig& cfg) {
    auto te = std::make_unique<engine::TaskExecutor>(id, cfg, sim);
    te->attach_fabric(fabric.get(), group, id, 1023);
    auto& ref = *te;
    tes.emplace(id, std::move(te));
    wire(ref);
    return ref;
  }

  void wire(engine::TaskExecutor& te, engine::TaskExecutor* decode = nullptr) {
    engine::EngineHooks h;
    auto& m = sim.metrics();
    h.on_admitted = [&m](const engine::SeqView& v, int64_t cached) {
      m.on_started(v.metrics_handle);
      m.on_cached_prefix(v.metrics_handle, cached);
    };
    h.on_token = [&m](const engine::SeqView& v, Micros t) {
      m.on_token(v.metrics_handle, t);
    };
    h.on_finished = [&m](const engine::SeqView& v, Micros t) {
      m.on_completed(v.metrics_handle, t);
    };
    h.on_rejected = [this, &m](const engine::SeqView& v, Micros t) {
      m.on_rejected(v.metrics_handle, t);
      rejected.push_back(v.request->id);
    };
    if (decode != nullptr) {
      h.on_prefill_done = [&te, decode](const engine::SeqView& v) {
        engine::handoff_kv(te, *decode, *v.request, v.metrics_handle,
                           v.seq_id);
      };
    }
    te.set_hooks(std::move(h));
  }

  // Arrival event that enqueues on te with the given role.
  void submit(TeId te, workload::Request r,
              workload::TaskKind role = workload::TaskKind::kColocated) {
    requests.push_back(std::make_unique<workload::Request>(std::move(r)));
    const workload::Request* req = requests.back().get();
    sim.schedule(req->arrival, sim::EventKind::kRequestArrival,
                 [this, te, req, role] {
                   const auto h = sim.metrics().on_arrival(
                       req->id, req->arrival, req->prompt_len());
                   handles[req->id] = h;
                   tes.at(te)->enqueue(*req, h, role);
                 });
  }

  const sim::RequestRecord& record(const std::string& id) const {
    return sim.metrics().record(handles.at(id));
  }
};

}  // namespace servesim::testing
