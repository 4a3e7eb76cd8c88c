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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace servesim::dsched {

// Bucket i covers (edge[i-1], edge[i]], the first bucket (0, edge[0]].
struct HeatmapAxes {
  std::vector<int64_t> prefill_edges = {512, 1024, 2048, 4096, 8192};
  std::vector<double> ratio_edges = {0.01, 0.05, 0.1, 0.25, 0.5, 1.0};

  size_t rows() const { return prefill_edges.size(); }
  size_t cols() const { return ratio_edges.size(); }
  // nullopt when the input lies outside every bucket.
  std::optional<size_t> prefill_bucket(int64_t prefill_len) const;
  std::optional<size_t> ratio_bucket(double ratio) const;
  bool operator==(const HeatmapAxes&) const = default;
};

void validate(const HeatmapAxes& axes);

// JCT_colocated / JCT_disaggregated - 1; positive favours disaggregation.
double cell_value(double jct_colocated, double jct_disaggregated);

// Mean JCT per cell for both setups at one RPS. Missing measurements stay
// nullopt.
struct JctProfile {
  double rps = 0.0;
  std::vector<std::vector<std::optional<double>>> colocated;
  std::vector<std::vector<std::optional<double>>> disaggregated;

  static JctProfile empty(const HeatmapAxes& axes, double rps);
};

struct Heatmap {
  HeatmapAxes axes;
  std::string provenance = "single-rps";  // or "combined"
  std::optional<double> rps;
  std::vector<std::vector<double>> cells;  // [prefill row][ratio col]

  static Heatmap zeros(const HeatmapAxes& axes);
  double at(size_t row, size_t col) const { return cells.at(row).at(col); }
  // 0 when either input is out of range.
  double lookup(int64_t prefill_len, double ratio) const;
};

struct HeatmapSet {
  std::vector<Heatmap> per_rps;
  Heatmap combined;
};

// Throws Error(kMissingCell) when a measurement is absent or not positive.
Heatmap build_single(const HeatmapAxes& axes, const JctProfile& profile);
// Element-wise sum. Throws Error(kInvalidArgument) on mismatched axes.
Heatmap combine(const std::vector<Heatmap>& maps);
HeatmapSet build_heatmap(const HeatmapAxes& axes,
                         const std::vector<JctProfile>& profiles);

// Fraction of cells whose sign agrees across every map.
double sign_stability(const std::vector<Heatmap>& maps);

nlohmann::json heatmap_to_json(const Heatmap& map);
Heatmap heatmap_from_json(const nlohmann::json& j);
// {"prefill_edges", "ratio_edges", "per_rps": [...], "combined": {...}}
nlohmann::json heatmap_set_to_json(const HeatmapSet& set);
HeatmapSet heatmap_set_from_json(const nlohmann::json& j);
HeatmapSet load_heatmap_set(const std::string& path);

}  // namespace servesim::dsched
