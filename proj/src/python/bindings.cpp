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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "servesim/common/error.h"
#include "servesim/dsched/heatmap.h"
#include "servesim/dsched/policy.h"
#include "servesim/dsched/predictor.h"
#include "servesim/engine/engine.h"
#include "servesim/rtc/rtc.h"
#include "servesim/runner/commands.h"
#include "servesim/sim/simulator.h"
#include "servesim/workload/trace.h"

namespace py = pybind11;
using nlohmann::json;

namespace servesim {
namespace {

workload::Request make_request(const std::string& id,
                               std::vector<TokenId> prompt,
                               int64_t decode_len) {
  workload::Request r;
  r.id = id;
  r.prompt_tokens = std::move(prompt);
  r.true_decode_len = decode_len;
  return r;
}

runner::ClusterConfig parse_config(const std::string& text) {
  return runner::cluster_config_from_json(json::parse(text));
}

// Owns the simulator clock the cache stamps blocks with.
class TensorCache {
 public:
  TensorCache(int32_t block_size, int64_t npu_capacity) {
    rtc::RtcConfig c;
    c.block_size = block_size;
    c.npu_capacity = npu_capacity;
    cache_ = std::make_unique<rtc::RelationalTensorCache>(c, sim_);
  }

  std::vector<rtc::BlockId> alloc_blocks(int64_t n) {
    return cache_->alloc_blocks(n);
  }
  void commit_prefix(const std::vector<TokenId>& tokens,
                     const std::vector<rtc::BlockId>& blocks,
                     std::optional<std::string> context_id) {
    cache_->commit_prefix(tokens, blocks, context_id);
  }
  std::pair<int64_t, std::vector<rtc::BlockId>> match(
      const std::vector<TokenId>& tokens) {
    const auto m = cache_->match_by_prefix_tokens(tokens);
    return {m.matched_token_count, m.block_ids()};
  }
  std::pair<int64_t, std::vector<rtc::BlockId>> match_by_id(
      const std::string& context_id) {
    const auto m = cache_->match_by_id(context_id);
    return {m.matched_token_count, m.block_ids()};
  }
  void free(const std::vector<rtc::BlockId>& ids) { cache_->free(ids); }
  void release(const std::vector<rtc::BlockId>& ids) { cache_->release(ids); }
  int64_t free_blocks() const { return cache_->free_blocks(); }
  int64_t indexed_nodes() const { return cache_->indexed_nodes(); }

 private:
  sim::Simulator sim_;
  std::unique_ptr<rtc::RelationalTensorCache> cache_;
};

std::string generate_trace(const std::string& spec) {
  std::ostringstream os;
  workload::save_trace(
      workload::generate_trace(
          workload::workload_spec_from_json(json::parse(spec))),
      os);
  return os.str();
}

std::string profile_heatmap(const std::string& config,
                            std::vector<double> rps_grid, uint64_t seed) {
  const auto c = parse_config(config);
  if (rps_grid.empty()) {
    rps_grid = c.profile.rps_grid;
  }
  return runner::profile_to_json(runner::profile_heatmap(c, rps_grid, seed))
      .dump();
}

std::string run_trace(const std::string& config, const std::string& policy,
                      std::optional<std::string> heatmap,
                      std::optional<std::string> trace) {
  const auto c = parse_config(config);
  const auto p = runner::policy_from_name(policy);
  std::vector<workload::Request> requests;
  if (trace) {
    std::istringstream is(*trace);
    requests = workload::load_trace(is);
  } else {
    requests = runner::resolve_requests(c, {});
  }
  dsched::Heatmap map = dsched::Heatmap::zeros(c.heatmap_axes);
  if (heatmap) {
    const auto j = json::parse(*heatmap);
    map = j.contains("combined") ? dsched::heatmap_set_from_json(j).combined
                                 : dsched::heatmap_from_json(j);
  } else if (runner::policy_uses_heatmap(p)) {
    map = runner::resolve_heatmap(c, {}, p);
  }
  const auto r = runner::run_trace(c, requests, p, map);
  std::ostringstream csv;
  r.metrics.write_csv(csv);
  return json{{"summary", r.summary},
              {"requests_csv", csv.str()},
              {"conserved", r.conserved},
              {"event_digest", r.event_digest},
              {"tes", r.te_stats}}
      .dump();
}

std::string scale_bench(const std::string& config, const std::string& model,
                        std::optional<std::string> path,
                        std::optional<int32_t> n) {
  const auto c = parse_config(config);
  auto out = json::array();
  for (const auto& row :
       runner::run_scale_bench(c, runner::resolve_model(model), path, n)) {
    auto t = autoscaler::timeline_to_json(row.timeline);
    t["scenario"] = row.scenario;
    t["n"] = row.n;
    out.push_back(std::move(t));
  }
  return out.dump();
}

// Members are (kind, id, queued_tokens, running_tokens) with kind
// "colocated" or "disagg_pair"; match_lens maps member id to its prefix match.
dsched::GroupMember route(const std::vector<TokenId>& prompt,
                          const std::string& request_id, int64_t decode_len,
                          const std::vector<dsched::GroupMember>& members,
                          const std::map<TeId, int64_t>& match_lens,
                          const std::string& heatmap,
                          const dsched::DecodePredictor& predictor,
                          double epsilon) {
  const auto req = make_request(request_id, prompt, decode_len);
  const auto map = dsched::heatmap_from_json(json::parse(heatmap));
  const dsched::PrefixMatcher matcher =
      [&match_lens](const dsched::GroupMember& m, const workload::Request&) {
        const auto it = match_lens.find(m.id);
        return it == match_lens.end() ? int64_t{0} : it->second;
      };
  return dsched::dist_sched(req, members, map, predictor, matcher, epsilon);
}

}  // namespace
}  // namespace servesim

PYBIND11_MODULE(_servesim, m) {
  using namespace servesim;
  m.doc() = "Discrete-event simulator for disaggregated LLM serving.";

  py::register_exception<Error>(m, "ServesimError", PyExc_RuntimeError);

  py::class_<engine::CostModel>(m, "CostModel")
      .def(py::init<>())
      .def_readwrite("a_p", &engine::CostModel::a_p)
      .def_readwrite("b_p", &engine::CostModel::b_p)
      .def_readwrite("a_d", &engine::CostModel::a_d)
      .def_readwrite("c_d", &engine::CostModel::c_d)
      .def_readwrite("b_d", &engine::CostModel::b_d);
  m.def("iteration_duration", &engine::iteration_duration, py::arg("cost"),
        py::arg("decode_members"), py::arg("prefill_tokens"),
        py::arg("prefill_chunks"), py::arg("kv_blocks_touched"));
  m.def("iteration_wall_time", &engine::iteration_wall_time,
        py::arg("duration"), py::arg("sched_overhead"), py::arg("async_sched"));

  py::class_<dsched::DecodePredictor>(m, "DecodePredictor")
      .def(py::init([](int64_t bucket_size, double accuracy, uint64_t seed) {
             dsched::DecodePredictor p{bucket_size, accuracy, seed};
             dsched::validate(p);
             return p;
           }),
           py::arg("bucket_size") = 128, py::arg("accuracy") = 0.849,
           py::arg("seed") = 0)
      .def_readonly("bucket_size", &dsched::DecodePredictor::bucket_size)
      .def_readonly("accuracy", &dsched::DecodePredictor::accuracy)
      .def(
          "predict_bucket",
          [](const dsched::DecodePredictor& p, const std::string& id,
             int64_t prompt_len, int64_t decode_len) {
            return p.predict_bucket(make_request(
                id, std::vector<TokenId>(static_cast<size_t>(prompt_len), 1),
                decode_len));
          },
          py::arg("request_id"), py::arg("prompt_len"), py::arg("decode_len"));

  py::class_<dsched::GroupMember>(m, "GroupMember")
      .def(py::init([](const std::string& kind, TeId id, int64_t queued,
                       int64_t running) {
             dsched::GroupMember g;
             SERVESIM_CHECK(kind == "colocated" || kind == "disagg_pair",
                            ErrorCode::kInvalidArgument,
                            "unknown member kind " + kind);
             g.kind = kind == "colocated" ? dsched::MemberKind::kColocated
                                          : dsched::MemberKind::kDisaggPair;
             g.id = id;
             g.queued_tokens = queued;
             g.running_tokens = running;
             return g;
           }),
           py::arg("kind"), py::arg("id"), py::arg("queued_tokens") = 0,
           py::arg("running_tokens") = 0)
      .def_property_readonly("kind",
                             [](const dsched::GroupMember& g) {
                               return std::string(
                                   dsched::member_kind_name(g.kind));
                             })
      .def_readonly("id", &dsched::GroupMember::id)
      .def_readonly("queued_tokens", &dsched::GroupMember::queued_tokens)
      .def_readonly("running_tokens", &dsched::GroupMember::running_tokens);
  m.def("route", &route, py::arg("prompt"), py::arg("request_id"),
        py::arg("decode_len"), py::arg("members"), py::arg("match_lens"),
        py::arg("heatmap"), py::arg("predictor"), py::arg("epsilon") = 0.2);

  m.def("cell_value", &dsched::cell_value, py::arg("jct_colocated"),
        py::arg("jct_disaggregated"));

  py::class_<TensorCache>(m, "TensorCache")
      .def(py::init<int32_t, int64_t>(), py::arg("block_size") = 16,
           py::arg("npu_capacity") = 8192)
      .def("alloc_blocks", &TensorCache::alloc_blocks, py::arg("n"))
      .def("commit_prefix", &TensorCache::commit_prefix, py::arg("tokens"),
           py::arg("blocks"), py::arg("context_id") = std::nullopt)
      .def("match_by_prefix_tokens", &TensorCache::match, py::arg("tokens"))
      .def("match_by_id", &TensorCache::match_by_id, py::arg("context_id"))
      .def("free", &TensorCache::free, py::arg("blocks"))
      .def("release", &TensorCache::release, py::arg("blocks"))
      .def_property_readonly("free_blocks", &TensorCache::free_blocks)
      .def_property_readonly("indexed_nodes", &TensorCache::indexed_nodes);

  m.def("_generate_trace", &generate_trace, py::arg("spec"));
  m.def("_load_config", [](const std::string& path) {
    return runner::cluster_config_to_json(runner::load_cluster_config(path))
        .dump();
  });
  m.def("_default_config", [] {
    return runner::cluster_config_to_json(runner::ClusterConfig{}).dump();
  });
  m.def("_profile_heatmap", &profile_heatmap, py::arg("config"),
        py::arg("rps_grid"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def("_run_trace", &run_trace, py::arg("config"), py::arg("policy"),
        py::arg("heatmap"), py::arg("trace"),
        py::call_guard<py::gil_scoped_release>());
  m.def("_scale_bench", &scale_bench, py::arg("config"), py::arg("model"),
        py::arg("path"), py::arg("n"));
}
