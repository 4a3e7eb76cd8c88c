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

#include "servesim/dsched/heatmap.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "servesim/common/error.h"

namespace servesim::dsched {

std::optional<size_t> HeatmapAxes::prefill_bucket(int64_t prefill_len) const {
  if (prefill_len <= 0) {
    return std::nullopt;
  }
  auto it = std::lower_bound(prefill_edges.begin(), prefill_edges.end(),
                             prefill_len);
  if (it == prefill_edges.end()) {
    return std::nullopt;
  }
  return static_cast<size_t>(it - prefill_edges.begin());
}

std::optional<size_t> HeatmapAxes::ratio_bucket(double ratio) const {
  if (!(ratio > 0.0)) {
    return std::nullopt;
  }
  auto it = std::lower_bound(ratio_edges.begin(), ratio_edges.end(), ratio);
  if (it == ratio_edges.end()) {
    return std::nullopt;
  }
  return static_cast<size_t>(it - ratio_edges.begin());
}

void validate(const HeatmapAxes& axes) {
  SERVESIM_CHECK(!axes.prefill_edges.empty() && !axes.ratio_edges.empty(),
                 ErrorCode::kConfigError, "heatmap axes must be non-empty");
  for (size_t i = 0; i < axes.prefill_edges.size(); ++i) {
    SERVESIM_CHECK(axes.prefill_edges[i] > 0 &&
                       (i == 0 ||
                        axes.prefill_edges[i] > axes.prefill_edges[i - 1]),
                   ErrorCode::kConfigError,
                   "prefill edges must be positive and increasing");
  }
  for (size_t i = 0; i < axes.ratio_edges.size(); ++i) {
    SERVESIM_CHECK(axes.ratio_edges[i] > 0 &&
                       (i == 0 || axes.ratio_edges[i] > axes.ratio_edges[i - 1]),
                   ErrorCode::kConfigError,
                   "ratio edges must be positive and increasing");
  }
}

double cell_value(double jct_colocated, double jct_disaggregated) {
  return jct_colocated / jct_disaggregated - 1.0;
}

JctProfile JctProfile::empty(const HeatmapAxes& axes, double rps) {
  JctProfile p;
  p.rps = rps;
  p.colocated.assign(axes.rows(),
                     std::vector<std::optional<double>>(axes.cols()));
  p.disaggregated = p.colocated;
  return p;
}

Heatmap Heatmap::zeros(const HeatmapAxes& axes) {
  Heatmap h;
  h.axes = axes;
  h.cells.assign(axes.rows(), std::vector<double>(axes.cols(), 0.0));
  return h;
}

double Heatmap::lookup(int64_t prefill_len, double ratio) const {
  const auto r = axes.prefill_bucket(prefill_len);
  const auto c = axes.ratio_bucket(ratio);
  if (!r || !c) {
    return 0.0;
  }
  return at(*r, *c);
}

Heatmap build_single(const HeatmapAxes& axes, const JctProfile& profile) {
  validate(axes);
  Heatmap h = Heatmap::zeros(axes);
  h.provenance = "single-rps";
  h.rps = profile.rps;
  for (size_t r = 0; r < axes.rows(); ++r) {
    for (size_t c = 0; c < axes.cols(); ++c) {
      auto get = [&](const auto& grid) -> std::optional<double> {
        if (r >= grid.size() || c >= grid[r].size()) {
          return std::nullopt;
        }
        return grid[r][c];
      };
      const auto co = get(profile.colocated);
      const auto di = get(profile.disaggregated);
      SERVESIM_CHECK(co && di && *co > 0 && *di > 0, ErrorCode::kMissingCell,
                     "cell (" + std::to_string(axes.prefill_edges[r]) + ", " +
                         std::to_string(axes.ratio_edges[c]) + ") at rps " +
                         std::to_string(profile.rps));
      h.cells[r][c] = cell_value(*co, *di);
    }
  }
  return h;
}

Heatmap combine(const std::vector<Heatmap>& maps) {
  SERVESIM_CHECK(!maps.empty(), ErrorCode::kInvalidArgument,
                 "nothing to combine");
  Heatmap out = Heatmap::zeros(maps.front().axes);
  out.provenance = "combined";
  for (const auto& m : maps) {
    SERVESIM_CHECK(m.axes == out.axes, ErrorCode::kInvalidArgument,
                   "heatmaps with different axes");
    for (size_t r = 0; r < out.axes.rows(); ++r) {
      for (size_t c = 0; c < out.axes.cols(); ++c) {
        out.cells[r][c] += m.cells[r][c];
      }
    }
  }
  return out;
}

HeatmapSet build_heatmap(const HeatmapAxes& axes,
                         const std::vector<JctProfile>& profiles) {
  HeatmapSet set;
  for (const auto& p : profiles) {
    set.per_rps.push_back(build_single(axes, p));
  }
  set.combined = combine(set.per_rps);
  return set;
}

double sign_stability(const std::vector<Heatmap>& maps) {
  if (maps.empty()) {
    return 0.0;
  }
  const auto& axes = maps.front().axes;
  const size_t total = axes.rows() * axes.cols();
  size_t stable = 0;
  for (size_t r = 0; r < axes.rows(); ++r) {
    for (size_t c = 0; c < axes.cols(); ++c) {
      auto sign = [&](const Heatmap& m) {
        const double v = m.cells[r][c];
        return (v > 0) - (v < 0);
      };
      const int s0 = sign(maps.front());
      const bool agree = std::all_of(
          maps.begin(), maps.end(),
          [&](const Heatmap& m) { return sign(m) == s0; });
      stable += agree ? 1 : 0;
    }
  }
  return static_cast<double>(stable) / static_cast<double>(total);
}

nlohmann::json heatmap_to_json(const Heatmap& map) {
  nlohmann::json j = {{"provenance", map.provenance},
                      {"prefill_edges", map.axes.prefill_edges},
                      {"ratio_edges", map.axes.ratio_edges},
                      {"cells", map.cells}};
  if (map.rps) {
    j["rps"] = *map.rps;
  }
  return j;
}

Heatmap heatmap_from_json(const nlohmann::json& j) {
  try {
    Heatmap h;
    h.axes.prefill_edges = j.at("prefill_edges").get<std::vector<int64_t>>();
    h.axes.ratio_edges = j.at("ratio_edges").get<std::vector<double>>();
    validate(h.axes);
    h.provenance = j.value("provenance", std::string("combined"));
    if (j.contains("rps")) {
      h.rps = j.at("rps").get<double>();
    }
    h.cells = j.at("cells").get<std::vector<std::vector<double>>>();
    SERVESIM_CHECK(h.cells.size() == h.axes.rows(), ErrorCode::kConfigError,
                   "heatmap row count does not match prefill edges");
    for (const auto& row : h.cells) {
      SERVESIM_CHECK(row.size() == h.axes.cols(), ErrorCode::kConfigError,
                     "heatmap column count does not match ratio edges");
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("heatmap: ") + e.what());
  }
}

nlohmann::json heatmap_set_to_json(const HeatmapSet& set) {
  auto per = nlohmann::json::array();
  for (const auto& m : set.per_rps) {
    per.push_back(heatmap_to_json(m));
  }
  return {{"prefill_edges", set.combined.axes.prefill_edges},
          {"ratio_edges", set.combined.axes.ratio_edges},
          {"per_rps", per},
          {"combined", heatmap_to_json(set.combined)},
          {"sign_stability", sign_stability(set.per_rps)}};
}

HeatmapSet heatmap_set_from_json(const nlohmann::json& j) {
  HeatmapSet set;
  try {
    if (j.contains("per_rps")) {
      for (const auto& m : j.at("per_rps")) {
        set.per_rps.push_back(heatmap_from_json(m));
      }
    }
    if (j.contains("combined")) {
      set.combined = heatmap_from_json(j.at("combined"));
    } else {
      set.combined = combine(set.per_rps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("heatmap: ") + e.what());
  }
  return set;
}

HeatmapSet load_heatmap_set(const std::string& path) {
  std::ifstream in(path);
  SERVESIM_CHECK(in.good(), ErrorCode::kConfigError,
                 "cannot open heatmap " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError,
                "heatmap " + path + ": " + std::string(e.what()));
  }
  return heatmap_set_from_json(j);
}

}  // namespace servesim::dsched
