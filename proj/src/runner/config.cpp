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

#include "servesim/runner/config.h"

#include <fstream>
#include <set>

#include "servesim/common/error.h"

namespace servesim::runner {

namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

void check_keys(const json& j, const std::set<std::string>& keys,
                const std::string& where) {
  SERVESIM_CHECK(j.is_object(), ErrorCode::kConfigError,
                 where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    SERVESIM_CHECK(key == "comment" || keys.count(key) > 0,
                   ErrorCode::kConfigError,
                   "unknown key '" + key + "' in " + where);
  }
}

std::vector<autoscaler::HostSpec> hosts_from_json(const json& j) {
  std::vector<autoscaler::HostSpec> hosts;
  if (j.is_array()) {
    for (const auto& h : j) {
      check_keys(h, {"npus", "dram_bytes"}, "hosts[]");
      autoscaler::HostSpec spec;
      read(h, "npus", spec.npus);
      read(h, "dram_bytes", spec.dram_bytes);
      hosts.push_back(spec);
    }
    return hosts;
  }
  check_keys(j, {"count", "npus", "dram_bytes"}, "hosts");
  autoscaler::HostSpec spec;
  read(j, "npus", spec.npus);
  read(j, "dram_bytes", spec.dram_bytes);
  hosts.assign(j.value("count", 1), spec);
  return hosts;
}

const std::map<std::string, autoscaler::ModelSpec>& model_presets() {
  static const std::map<std::string, autoscaler::ModelSpec> kPresets = {
      {"llama3-8b", {"llama3-8b", 16'000'000'000, 1}},
      {"llama-34b", {"llama-34b", 68'000'000'000, 4}},
      {"llama-70b", {"llama-70b", 140'000'000'000, 4}},
  };
  return kPresets;
}

}  // namespace

std::string_view policy_name(Policy policy) {
  switch (policy) {
    case Policy::kRoundRobin:
      return "rr";
    case Policy::kLoadOnly:
      return "load";
    case Policy::kLocalityOnly:
      return "locality";
    case Policy::kPdOnly:
      return "pd";
    case Policy::kCombined:
      return "combined";
  }
  return "unknown";
}

Policy policy_from_name(std::string_view name) {
  static const std::map<std::string, Policy, std::less<>> kNames = {
      {"rr", Policy::kRoundRobin},         {"RR", Policy::kRoundRobin},
      {"load", Policy::kLoadOnly},         {"LoadOnly", Policy::kLoadOnly},
      {"locality", Policy::kLocalityOnly}, {"LocalityOnly", Policy::kLocalityOnly},
      {"pd", Policy::kPdOnly},             {"PDOnly", Policy::kPdOnly},
      {"combined", Policy::kCombined},     {"Combined", Policy::kCombined},
  };
  auto it = kNames.find(name);
  SERVESIM_CHECK(it != kNames.end(), ErrorCode::kConfigError,
                 "unknown policy '" + std::string(name) + "'");
  return it->second;
}

bool policy_uses_heatmap(Policy policy) {
  return policy == Policy::kPdOnly || policy == Policy::kCombined;
}

ClusterConfig::ClusterConfig() {
  prefill.mode = engine::EngineMode::kPrefillOnly;
  prefill.tp_degree = 2;
  decode.mode = engine::EngineMode::kDecodeOnly;
  decode.tp_degree = 2;
}

void validate(const ClusterConfig& c) {
  SERVESIM_CHECK(!c.hosts.empty(), ErrorCode::kConfigError,
                 "at least one host is required");
  for (const auto& h : c.hosts) {
    SERVESIM_CHECK(h.npus >= 1 && h.dram_bytes >= 0, ErrorCode::kConfigError,
                   "invalid host spec");
  }
  SERVESIM_CHECK(c.colocated_tes >= 0 && c.disagg_pairs >= 0,
                 ErrorCode::kConfigError, "TE counts must be >= 0");
  SERVESIM_CHECK(c.colocated_tes + c.disagg_pairs > 0 || c.autoscale.enabled,
                 ErrorCode::kConfigError,
                 "config defines no TE and the autoscaler is disabled");
  SERVESIM_CHECK(c.colocated.mode == engine::EngineMode::kColocated &&
                     c.prefill.mode == engine::EngineMode::kPrefillOnly &&
                     c.decode.mode == engine::EngineMode::kDecodeOnly,
                 ErrorCode::kConfigError, "engine modes do not match roles");
  SERVESIM_CHECK(c.prefill.block_size == c.decode.block_size &&
                     c.prefill.block_size == c.colocated.block_size,
                 ErrorCode::kConfigError,
                 "all engines must share one block size");
  engine::validate(c.colocated);
  engine::validate(c.prefill);
  engine::validate(c.decode);
  SERVESIM_CHECK(c.balance_epsilon >= 0, ErrorCode::kConfigError,
                 "balance_epsilon must be >= 0");
  dsched::validate(c.predictor);
  dsched::validate(c.heatmap_axes);
  SERVESIM_CHECK(c.slo.ttft > 0 && c.slo.tpot > 0, ErrorCode::kConfigError,
                 "SLO targets must be positive");
  SERVESIM_CHECK(!c.profile.rps_grid.empty() &&
                     c.profile.requests_per_cell >= 1 && c.profile.workers >= 0,
                 ErrorCode::kConfigError, "invalid profile settings");
  for (double r : c.profile.rps_grid) {
    SERVESIM_CHECK(r > 0, ErrorCode::kConfigError, "RPS must be positive");
  }
  autoscaler::validate(c.model);
  autoscaler::validate(c.scaling);
  autoscaler::validate(c.autoscale.policy);
  SERVESIM_CHECK(c.autoscale.interval > 0 && c.autoscale.max_extra_tes >= 0 &&
                     c.autoscale.prewarmed_pods >= 0,
                 ErrorCode::kConfigError, "invalid autoscaler settings");
  if (c.autoscale.enabled) {
    SERVESIM_CHECK(c.model.tp_degree == c.colocated.tp_degree,
                   ErrorCode::kConfigError,
                   "autoscaled TEs use the colocated engine; tp must match");
  }
  for (int32_t n : c.scale_bench.fork_counts) {
    SERVESIM_CHECK(n >= 1, ErrorCode::kConfigError,
                   "fork counts must be >= 1");
  }
  // Every static TE needs a home.
  std::vector<int32_t> free;
  for (const auto& h : c.hosts) {
    free.push_back(h.npus);
  }
  auto place = [&](int32_t tp) {
    for (auto& f : free) {
      if (f >= tp) {
        f -= tp;
        return true;
      }
    }
    return false;
  };
  for (int32_t i = 0; i < c.colocated_tes; ++i) {
    SERVESIM_CHECK(place(c.colocated.tp_degree), ErrorCode::kConfigError,
                   "hosts cannot hold the colocated TEs");
  }
  for (int32_t i = 0; i < c.disagg_pairs; ++i) {
    SERVESIM_CHECK(place(c.prefill.tp_degree) && place(c.decode.tp_degree),
                   ErrorCode::kConfigError,
                   "hosts cannot hold the disaggregated pairs");
  }
}

ClusterConfig cluster_config_from_json(const json& j,
                                       const std::filesystem::path& base_dir) {
  check_keys(j,
             {"seed", "hosts", "scale_up_across_hosts", "links", "layout",
              "engines", "scheduler", "slo", "profile", "workload", "model",
              "scaling", "autoscaler", "scale_bench"},
             "config");
  ClusterConfig c;
  try {
    read(j, "seed", c.seed);
    if (j.contains("hosts")) {
      c.hosts = hosts_from_json(j.at("hosts"));
    }
    read(j, "scale_up_across_hosts", c.scale_up_across_hosts);
    if (j.contains("links")) {
      c.links = distflow::link_table_from_json(j.at("links"));
    }
    if (j.contains("layout")) {
      const auto& l = j.at("layout");
      check_keys(l, {"colocated_tes", "disagg_pairs"}, "layout");
      read(l, "colocated_tes", c.colocated_tes);
      read(l, "disagg_pairs", c.disagg_pairs);
    }
    if (j.contains("engines")) {
      const auto& e = j.at("engines");
      check_keys(e, {"common", "colocated", "prefill", "decode"}, "engines");
      // "common" applies first; the role keeps its mode.
      auto role = [&](const char* name, engine::EngineConfig base) {
        const auto mode = base.mode;
        if (e.contains("common")) {
          base = engine::engine_config_from_json(e.at("common"), base);
        }
        base.mode = mode;
        if (e.contains(name)) {
          base = engine::engine_config_from_json(e.at(name), base);
        }
        return base;
      };
      c.colocated = role("colocated", c.colocated);
      c.prefill = role("prefill", c.prefill);
      c.decode = role("decode", c.decode);
    }
    if (j.contains("scheduler")) {
      const auto& s = j.at("scheduler");
      check_keys(s, {"policy", "balance_epsilon", "heatmap", "heatmap_axes",
                     "predictor"},
                 "scheduler");
      if (s.contains("policy")) {
        c.policy = policy_from_name(s.at("policy").get<std::string>());
      }
      read(s, "balance_epsilon", c.balance_epsilon);
      if (s.contains("heatmap")) {
        std::filesystem::path p = s.at("heatmap").get<std::string>();
        c.heatmap_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
      }
      if (s.contains("heatmap_axes")) {
        const auto& a = s.at("heatmap_axes");
        check_keys(a, {"prefill_edges", "ratio_edges"}, "heatmap_axes");
        read(a, "prefill_edges", c.heatmap_axes.prefill_edges);
        read(a, "ratio_edges", c.heatmap_axes.ratio_edges);
      }
      if (s.contains("predictor")) {
        const auto& p = s.at("predictor");
        check_keys(p, {"bucket_size", "accuracy", "seed"}, "predictor");
        read(p, "bucket_size", c.predictor.bucket_size);
        read(p, "accuracy", c.predictor.accuracy);
        read(p, "seed", c.predictor.seed);
      }
    }
    if (j.contains("slo")) {
      const auto& s = j.at("slo");
      check_keys(s, {"ttft_ms", "tpot_ms"}, "slo");
      if (s.contains("ttft_ms")) {
        c.slo.ttft = ceil_micros(s.at("ttft_ms").get<double>() * 1e3);
      }
      if (s.contains("tpot_ms")) {
        c.slo.tpot = ceil_micros(s.at("tpot_ms").get<double>() * 1e3);
      }
    }
    if (j.contains("profile")) {
      const auto& p = j.at("profile");
      check_keys(p, {"rps_grid", "requests_per_cell", "workers"}, "profile");
      read(p, "rps_grid", c.profile.rps_grid);
      read(p, "requests_per_cell", c.profile.requests_per_cell);
      read(p, "workers", c.profile.workers);
    }
    if (j.contains("workload")) {
      c.workload = workload::workload_spec_from_json(j.at("workload"));
    }
    if (j.contains("model")) {
      c.model = autoscaler::model_spec_from_json(j.at("model"));
    }
    if (j.contains("scaling")) {
      c.scaling = autoscaler::scaling_constants_from_json(j.at("scaling"));
    }
    if (j.contains("autoscaler")) {
      const auto& a = j.at("autoscaler");
      check_keys(a,
                 {"enabled", "interval_s", "max_extra_tes", "prewarmed_pods",
                  "violation_up", "violation_down", "queue_up_tokens",
                  "queue_down_tokens", "step", "cooldown_s"},
                 "autoscaler");
      read(a, "enabled", c.autoscale.enabled);
      if (a.contains("interval_s")) {
        c.autoscale.interval =
            seconds_to_micros(a.at("interval_s").get<double>());
      }
      read(a, "max_extra_tes", c.autoscale.max_extra_tes);
      read(a, "prewarmed_pods", c.autoscale.prewarmed_pods);
      c.autoscale.policy = autoscaler::policy_config_from_json(a);
    }
    if (j.contains("scale_bench")) {
      const auto& b = j.at("scale_bench");
      check_keys(b, {"fork_counts", "prewarmed", "scale_up_across_hosts"},
                 "scale_bench");
      read(b, "fork_counts", c.scale_bench.fork_counts);
      read(b, "prewarmed", c.scale_bench.prewarmed);
      read(b, "scale_up_across_hosts", c.scale_bench.scale_up_across_hosts);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) {
      throw;
    }
    throw Error(ErrorCode::kConfigError, e.what());
  }
  try {
    validate(c);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfigError) {
      throw;
    }
    throw Error(ErrorCode::kConfigError, e.what());
  }
  return c;
}

ClusterConfig load_cluster_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  SERVESIM_CHECK(in.good(), ErrorCode::kConfigError,
                 "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return cluster_config_from_json(j, path.parent_path());
}

json cluster_config_to_json(const ClusterConfig& c) {
  json hosts = json::array();
  for (const auto& h : c.hosts) {
    hosts.push_back({{"npus", h.npus}, {"dram_bytes", h.dram_bytes}});
  }
  json j = {
      {"seed", c.seed},
      {"hosts", hosts},
      {"scale_up_across_hosts", c.scale_up_across_hosts},
      {"links", distflow::link_table_to_json(c.links)},
      {"layout",
       {{"colocated_tes", c.colocated_tes}, {"disagg_pairs", c.disagg_pairs}}},
      {"engines",
       {{"colocated", engine::engine_config_to_json(c.colocated)},
        {"prefill", engine::engine_config_to_json(c.prefill)},
        {"decode", engine::engine_config_to_json(c.decode)}}},
      {"scheduler",
       {{"policy", policy_name(c.policy)},
        {"balance_epsilon", c.balance_epsilon},
        {"heatmap_axes",
         {{"prefill_edges", c.heatmap_axes.prefill_edges},
          {"ratio_edges", c.heatmap_axes.ratio_edges}}},
        {"predictor",
         {{"bucket_size", c.predictor.bucket_size},
          {"accuracy", c.predictor.accuracy},
          {"seed", c.predictor.seed}}}}},
      {"slo",
       {{"ttft_ms", static_cast<double>(c.slo.ttft) / 1e3},
        {"tpot_ms", static_cast<double>(c.slo.tpot) / 1e3}}},
      {"profile",
       {{"rps_grid", c.profile.rps_grid},
        {"requests_per_cell", c.profile.requests_per_cell},
        {"workers", c.profile.workers}}},
      {"model", autoscaler::model_spec_to_json(c.model)},
      {"scaling", autoscaler::scaling_constants_to_json(c.scaling)},
      {"scale_bench",
       {{"fork_counts", c.scale_bench.fork_counts},
        {"prewarmed", c.scale_bench.prewarmed},
        {"scale_up_across_hosts", c.scale_bench.scale_up_across_hosts}}},
  };
  if (c.heatmap_path) {
    j["scheduler"]["heatmap"] = c.heatmap_path->string();
  }
  if (c.workload) {
    j["workload"] = workload::workload_spec_to_json(*c.workload);
  }
  const auto& p = c.autoscale.policy;
  j["autoscaler"] = {{"enabled", c.autoscale.enabled},
                     {"interval_s", micros_to_seconds(c.autoscale.interval)},
                     {"max_extra_tes", c.autoscale.max_extra_tes},
                     {"prewarmed_pods", c.autoscale.prewarmed_pods},
                     {"violation_up", p.violation_up},
                     {"violation_down", p.violation_down},
                     {"queue_up_tokens", p.queue_up},
                     {"queue_down_tokens", p.queue_down},
                     {"step", p.step},
                     {"cooldown_s", micros_to_seconds(p.cooldown)}};
  return j;
}

autoscaler::ModelSpec resolve_model(const std::string& spec) {
  const auto& presets = model_presets();
  if (auto it = presets.find(spec); it != presets.end()) {
    return it->second;
  }
  std::ifstream in(spec);
  SERVESIM_CHECK(in.good(), ErrorCode::kConfigError,
                 "model '" + spec + "' is neither a preset nor a readable file");
  try {
    return autoscaler::model_spec_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, spec + ": " + e.what());
  }
}

}  // namespace servesim::runner
