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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

#include "servesim/common/error.h"
#include "servesim/runner/commands.h"

namespace servesim::runner {
namespace {

namespace fs = std::filesystem;

workload::WorkloadSpec small_workload(int64_t n, double rps, uint64_t seed) {
  workload::WorkloadSpec w;
  w.arrival.rate_rps = rps;
  w.arrival.num_requests = n;
  w.prompt_len = workload::LengthSpec::uniform(256, 3000);
  w.decode_len = workload::LengthSpec::uniform(8, 96);
  w.prefix_groups = {{512, 0.5}, {0, 0.5}};
  w.seed = seed;
  return w;
}

dsched::Heatmap checkerboard() {
  auto h = dsched::Heatmap::zeros(dsched::HeatmapAxes{});
  for (size_t r = 0; r < h.cells.size(); ++r) {
    for (size_t c = 0; c < h.cells[r].size(); ++c) {
      h.cells[r][c] = (r + c) % 2 == 0 ? 0.3 : -0.2;
    }
  }
  return h;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
      cells.emplace_back();
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("servesim_runner_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(ConfigTest, RejectsUnknownKeysAndBadValues) {
  auto code = [](const nlohmann::json& j) -> std::optional<ErrorCode> {
    try {
      cluster_config_from_json(j);
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_FALSE(code(nlohmann::json::object()));
  EXPECT_FALSE(code({{"comment", "x"}}));
  EXPECT_EQ(code({{"bogus", 1}}), ErrorCode::kConfigError);
  EXPECT_EQ(code({{"layout", {{"colocated_tes", -1}}}}),
            ErrorCode::kConfigError);
  EXPECT_EQ(code({{"scheduler", {{"policy", "fastest"}}}}),
            ErrorCode::kConfigError);
  EXPECT_EQ(code({{"scheduler", {{"balance_epsilon", "wide"}}}}),
            ErrorCode::kConfigError);
  EXPECT_EQ(code({{"hosts", {{"count", 1}, {"npus", 0}}}}),
            ErrorCode::kConfigError);
  EXPECT_EQ(code({{"profile", {{"rps_grid", {1.0, -2.0}}}}}),
            ErrorCode::kConfigError);
}

TEST(ConfigTest, JsonRoundTripAndShippedConfigsLoad) {
  const auto c = load_cluster_config(fs::path(SERVESIM_SOURCE_DIR) /
                                     "configs/cluster_policy_compare.json");
  EXPECT_EQ(c.colocated_tes, 2);
  EXPECT_EQ(c.disagg_pairs, 1);
  const auto again = cluster_config_from_json(cluster_config_to_json(c));
  EXPECT_EQ(cluster_config_to_json(again), cluster_config_to_json(c));
  for (const auto& e : fs::directory_iterator(fs::path(SERVESIM_SOURCE_DIR) /
                                              "configs")) {
    if (e.path().extension() == ".json" &&
        e.path().filename().string().rfind("cluster", 0) == 0) {
      EXPECT_NO_THROW(load_cluster_config(e.path())) << e.path();
    }
  }
  EXPECT_THROW(load_cluster_config("/nonexistent/servesim.json"), Error);
}

TEST(ConfigTest, ModelPresets) {
  const auto m = resolve_model("llama-70b");
  EXPECT_EQ(m.weight_bytes, 140'000'000'000);
  EXPECT_EQ(m.tp_degree, 4);
  EXPECT_EQ(resolve_model("llama3-8b").tp_degree, 1);
  EXPECT_THROW(resolve_model("gpt-zero"), Error);
}

TEST(RunTest, SummaryIsRecomputableFromCsv) {
  ClusterConfig c;
  const auto reqs = workload::generate_trace(small_workload(60, 2.0, 5));
  const auto r = run_trace(c, reqs, Policy::kCombined, checkerboard());
  EXPECT_TRUE(r.conserved);
  std::ostringstream os;
  r.metrics.write_csv(os);
  const auto rows = read_csv(os.str());
  ASSERT_EQ(rows.size(), reqs.size() + 1);
  ASSERT_EQ(rows[0].size(), 8u);
  std::vector<double> ttft;
  std::vector<double> jct;
  int64_t cached = 0;
  for (size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 8u);
    if (!rows[i][2].empty()) {
      ttft.push_back(std::stod(rows[i][2]));
    }
    if (!rows[i][4].empty()) {
      jct.push_back(std::stod(rows[i][4]));
    }
    cached += std::stoll(rows[i][7]);
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  const auto& s = r.summary;
  EXPECT_EQ(s["requests"].get<int64_t>(), 60);
  EXPECT_EQ(s["completed"].get<size_t>(), ttft.size());
  EXPECT_NEAR(s["ttft_us"]["mean"].get<double>(), mean(ttft), 1e-6);
  EXPECT_NEAR(s["jct_us"]["mean"].get<double>(), mean(jct), 1e-6);
  EXPECT_EQ(s["cache_hit_tokens"].get<int64_t>(), cached);
  EXPECT_GT(cached, 0);
}

TEST(RunTest, EveryPolicyConservesRequests) {
  ClusterConfig c;
  const auto reqs = workload::generate_trace(small_workload(40, 4.0, 9));
  for (Policy p : {Policy::kRoundRobin, Policy::kLoadOnly,
                   Policy::kLocalityOnly, Policy::kPdOnly, Policy::kCombined}) {
    const auto r = run_trace(c, reqs, p, checkerboard());
    EXPECT_TRUE(r.conserved) << policy_name(p);
    EXPECT_EQ(r.summary["completed"].get<int64_t>() +
                  r.summary["rejected"].get<int64_t>(),
              40)
        << policy_name(p);
  }
}

TEST(RunTest, DeterministicAcrossRuns) {
  ClusterConfig c;
  const auto reqs = workload::generate_trace(small_workload(50, 3.0, 21));
  const auto a = run_trace(c, reqs, Policy::kCombined, checkerboard());
  const auto b = run_trace(c, reqs, Policy::kCombined, checkerboard());
  EXPECT_EQ(a.event_digest, b.event_digest);
  std::ostringstream ca, cb;
  a.metrics.write_csv(ca);
  b.metrics.write_csv(cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.summary.dump(), b.summary.dump());
}

TEST(RunTest, EmptyTrace) {
  ClusterConfig c;
  const auto r = run_trace(c, {}, Policy::kRoundRobin, checkerboard());
  EXPECT_TRUE(r.conserved);
  EXPECT_EQ(r.summary["requests"].get<int64_t>(), 0);
  EXPECT_EQ(r.summary["throughput_rps"].get<double>(), 0.0);
}

TEST(RunTest, CmdRunWritesArtifacts) {
  ClusterConfig c;
  c.workload = small_workload(20, 2.0, 3);
  c.heatmap_path = std::nullopt;
  const auto dir = scratch("run");
  RunOptions o;
  o.policy = Policy::kRoundRobin;
  const auto r = cmd_run(c, o, dir);
  EXPECT_TRUE(fs::exists(dir / "requests.csv"));
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  const auto info = nlohmann::json::parse(slurp(dir / "run_info.json"));
  EXPECT_EQ(info["requests"].get<int64_t>(), 20);
  EXPECT_TRUE(info["conserved"].get<bool>());
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "summary.json")), r.summary);
  fs::remove_all(dir);
}

// Colocated members only, so the PD split is trivial and locality is the
// only difference from LoadOnly.
TEST(RunTest, LocalityRaisesCacheHitsOnSharedPrefixes) {
  ClusterConfig c;
  c.colocated_tes = 3;
  c.disagg_pairs = 0;
  auto w = small_workload(80, 2.0, 13);
  w.prefix_groups = {{1024, 0.4}, {1024, 0.4}, {0, 0.2}};
  const auto reqs = workload::generate_trace(w);
  const auto load = run_trace(c, reqs, Policy::kLoadOnly, checkerboard());
  const auto comb = run_trace(c, reqs, Policy::kCombined, checkerboard());
  EXPECT_GE(comb.summary["cache_hit_tokens"].get<int64_t>(),
            load.summary["cache_hit_tokens"].get<int64_t>());
}

TEST(ScaleBenchTest, AutoPathPrefersDramWithoutRunningTe) {
  ClusterConfig c;
  const auto rows = run_scale_bench(c, resolve_model("llama-70b"),
                                    std::string("auto"), 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].timeline.path, autoscaler::LoadPath::kDramHit);
}

TEST(ScaleBenchTest, RowsAndPathOrdering) {
  ClusterConfig c;
  c.scale_bench.fork_counts = {1, 4};
  const auto rows = run_scale_bench(c, resolve_model("llama-70b"),
                                    std::nullopt, std::nullopt);
  ASSERT_EQ(rows.size(), 6u);
  std::map<autoscaler::LoadPath, Micros> load;
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(rows[i].scenario, "te_load");
    load[rows[i].timeline.path] = rows[i].timeline.te_load;
  }
  using autoscaler::LoadPath;
  EXPECT_LT(load[LoadPath::kNpuForkHccs], load[LoadPath::kNpuForkRoce]);
  EXPECT_LT(load[LoadPath::kNpuForkRoce], load[LoadPath::kDramHit]);
  EXPECT_LT(load[LoadPath::kDramHit], load[LoadPath::kDramMiss]);
  EXPECT_EQ(rows[5].scenario, "fork_scale");
  EXPECT_EQ(rows[5].n, 4);

  std::ostringstream os;
  write_scale_csv(rows, os);
  EXPECT_EQ(read_csv(os.str()).size(), rows.size() + 1);

  EXPECT_THROW(run_scale_bench(c, resolve_model("llama-70b"),
                               std::string("teleport"), 1),
               Error);
}

}  // namespace
}  // namespace servesim::runner
