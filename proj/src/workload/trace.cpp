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

#include "servesim/workload/trace.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "servesim/common/error.h"
#include "servesim/common/hash.h"

namespace servesim::workload {

using nlohmann::json;

LengthSpec LengthSpec::constant(int64_t v) {
  LengthSpec s;
  s.dist = LengthDist::kConstant;
  s.value = v;
  s.min = s.max = v;
  return s;
}

LengthSpec LengthSpec::uniform(int64_t lo, int64_t hi) {
  LengthSpec s;
  s.dist = LengthDist::kUniform;
  s.min = lo;
  s.max = hi;
  return s;
}

LengthSpec LengthSpec::log_normal(double median, double sigma, int64_t lo,
                                  int64_t hi) {
  LengthSpec s;
  s.dist = LengthDist::kLogNormal;
  s.median = median;
  s.sigma = sigma;
  s.min = lo;
  s.max = hi;
  return s;
}

LengthSpec LengthSpec::ratio_band(double lo, double hi) {
  LengthSpec s;
  s.dist = LengthDist::kRatioBand;
  s.ratio_lo = lo;
  s.ratio_hi = hi;
  return s;
}

namespace {

void validate_length(const LengthSpec& s, const char* what,
                     bool ratio_allowed) {
  const std::string name(what);
  switch (s.dist) {
    case LengthDist::kConstant:
      SERVESIM_CHECK(s.value >= 1, ErrorCode::kInvalidSpec,
                     name + " constant must be >= 1");
      break;
    case LengthDist::kUniform:
      SERVESIM_CHECK(s.min >= 1 && s.max >= s.min, ErrorCode::kInvalidSpec,
                     name + " uniform bounds invalid");
      break;
    case LengthDist::kLogNormal:
      SERVESIM_CHECK(s.median > 0 && s.sigma >= 0 && s.min >= 1 &&
                         s.max >= s.min,
                     ErrorCode::kInvalidSpec,
                     name + " log-normal parameters invalid");
      break;
    case LengthDist::kRatioBand:
      SERVESIM_CHECK(ratio_allowed, ErrorCode::kInvalidSpec,
                     name + " cannot use a ratio band");
      SERVESIM_CHECK(s.ratio_lo > 0 && s.ratio_hi >= s.ratio_lo,
                     ErrorCode::kInvalidSpec, name + " ratio band invalid");
      break;
  }
}

int64_t sample_length(const LengthSpec& s, int64_t prompt_len,
                      std::mt19937_64& rng) {
  switch (s.dist) {
    case LengthDist::kConstant:
      return s.value;
    case LengthDist::kUniform:
      return std::uniform_int_distribution<int64_t>(s.min, s.max)(rng);
    case LengthDist::kLogNormal: {
      std::normal_distribution<double> n(0.0, 1.0);
      const double v = s.median * std::exp(s.sigma * n(rng));
      return std::clamp<int64_t>(std::llround(v), s.min, s.max);
    }
    case LengthDist::kRatioBand: {
      std::uniform_real_distribution<double> u(s.ratio_lo, s.ratio_hi);
      const double r = u(rng);
      return std::max<int64_t>(
          1, std::llround(r * static_cast<double>(prompt_len)));
    }
  }
  return 1;
}

}  // namespace

void validate(const WorkloadSpec& spec) {
  const auto& a = spec.arrival;
  SERVESIM_CHECK(a.rate_rps > 0 && std::isfinite(a.rate_rps),
                 ErrorCode::kInvalidSpec, "arrival rate must be positive");
  SERVESIM_CHECK(a.horizon_s || a.num_requests, ErrorCode::kInvalidSpec,
                 "set horizon_s or num_requests");
  if (a.horizon_s) {
    SERVESIM_CHECK(*a.horizon_s > 0, ErrorCode::kInvalidSpec,
                   "horizon must be positive");
  }
  if (a.num_requests) {
    SERVESIM_CHECK(*a.num_requests >= 0, ErrorCode::kInvalidSpec,
                   "num_requests must be non-negative");
  }
  validate_length(spec.prompt_len, "prompt_len", false);
  validate_length(spec.decode_len, "decode_len", true);
  SERVESIM_CHECK(spec.vocab_size >= 1, ErrorCode::kInvalidSpec,
                 "vocab_size must be positive");
  if (!spec.prefix_groups.empty()) {
    double total = 0.0;
    for (const auto& g : spec.prefix_groups) {
      SERVESIM_CHECK(g.prefix_len >= 0, ErrorCode::kInvalidSpec,
                     "prefix_len must be non-negative");
      SERVESIM_CHECK(g.share > 0, ErrorCode::kInvalidSpec,
                     "group share must be positive");
      total += g.share;
    }
    SERVESIM_CHECK(std::abs(total - 1.0) < 1e-9, ErrorCode::kInvalidSpec,
                   "prefix group shares must sum to 1");
  }
}

TokenSeq group_prefix_tokens(uint64_t seed, int32_t group, int32_t length,
                             int32_t vocab_size) {
  std::mt19937_64 rng(mix64(seed ^ mix64(0x5eedULL + static_cast<uint64_t>(group))));
  std::uniform_int_distribution<TokenId> tok(0, vocab_size - 1);
  TokenSeq out(static_cast<size_t>(length));
  for (auto& t : out) {
    t = tok(rng);
  }
  return out;
}

std::vector<Request> generate_trace(const WorkloadSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(mix64(spec.seed));
  std::uniform_int_distribution<TokenId> tok(0, spec.vocab_size - 1);
  std::exponential_distribution<double> gap(spec.arrival.rate_rps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<TokenSeq> prefixes;
  for (size_t g = 0; g < spec.prefix_groups.size(); ++g) {
    prefixes.push_back(group_prefix_tokens(spec.seed, static_cast<int32_t>(g),
                                           spec.prefix_groups[g].prefix_len,
                                           spec.vocab_size));
  }

  std::vector<Request> out;
  double t_s = 0.0;
  const double horizon = spec.arrival.horizon_s.value_or(
      std::numeric_limits<double>::infinity());
  const int64_t limit = spec.arrival.num_requests.value_or(
      std::numeric_limits<int64_t>::max());
  for (int64_t i = 0; i < limit; ++i) {
    if (spec.arrival.process == ArrivalProcess::kPoisson) {
      t_s += gap(rng);
    } else if (i > 0) {
      t_s += 1.0 / spec.arrival.rate_rps;
    }
    if (t_s > horizon) {
      break;
    }
    Request req;
    req.id = "req-" + std::to_string(i);
    req.arrival = seconds_to_micros(t_s);

    std::optional<int32_t> group;
    if (!spec.prefix_groups.empty()) {
      double u = unit(rng);
      int32_t g = 0;
      for (; g + 1 < static_cast<int32_t>(spec.prefix_groups.size()); ++g) {
        u -= spec.prefix_groups[g].share;
        if (u < 0) {
          break;
        }
      }
      group = g;
    }
    const int64_t prefix_len =
        group ? spec.prefix_groups[*group].prefix_len : 0;
    int64_t total = sample_length(spec.prompt_len, 0, rng);
    total = std::max(total, prefix_len + 1);
    if (group) {
      req.prompt_tokens = prefixes[*group];
      if (prefix_len > 0) {
        req.prefix = PrefixRef{*group, static_cast<int32_t>(prefix_len)};
      }
      if (spec.group_context_ids) {
        req.context_id = "ctx-" + std::to_string(*group);
      }
    }
    req.prompt_tokens.reserve(static_cast<size_t>(total));
    while (req.prompt_len() < total) {
      req.prompt_tokens.push_back(tok(rng));
    }
    req.true_decode_len = sample_length(spec.decode_len, total, rng);
    out.push_back(std::move(req));
  }
  return out;
}

namespace {

json length_to_json(const LengthSpec& s) {
  switch (s.dist) {
    case LengthDist::kConstant:
      return {{"dist", "constant"}, {"value", s.value}};
    case LengthDist::kUniform:
      return {{"dist", "uniform"}, {"min", s.min}, {"max", s.max}};
    case LengthDist::kLogNormal:
      return {{"dist", "lognormal"},
              {"median", s.median},
              {"sigma", s.sigma},
              {"min", s.min},
              {"max", s.max}};
    case LengthDist::kRatioBand:
      return {{"dist", "ratio_band"}, {"lo", s.ratio_lo}, {"hi", s.ratio_hi}};
  }
  return {};
}

LengthSpec length_from_json(const json& j) {
  const auto dist = j.at("dist").get<std::string>();
  if (dist == "constant") {
    return LengthSpec::constant(j.at("value").get<int64_t>());
  }
  if (dist == "uniform") {
    return LengthSpec::uniform(j.at("min").get<int64_t>(),
                               j.at("max").get<int64_t>());
  }
  if (dist == "lognormal") {
    return LengthSpec::log_normal(j.at("median").get<double>(),
                                  j.at("sigma").get<double>(),
                                  j.at("min").get<int64_t>(),
                                  j.at("max").get<int64_t>());
  }
  if (dist == "ratio_band") {
    return LengthSpec::ratio_band(j.at("lo").get<double>(),
                                  j.at("hi").get<double>());
  }
  throw Error(ErrorCode::kInvalidSpec, "unknown length dist '" + dist + "'");
}

}  // namespace

WorkloadSpec workload_spec_from_json(const json& j) {
  WorkloadSpec spec;
  try {
    const auto& a = j.at("arrival");
    const auto process = a.value("process", std::string("poisson"));
    if (process == "poisson") {
      spec.arrival.process = ArrivalProcess::kPoisson;
    } else if (process == "fixed") {
      spec.arrival.process = ArrivalProcess::kFixedRate;
    } else {
      throw Error(ErrorCode::kInvalidSpec,
                  "unknown arrival process '" + process + "'");
    }
    spec.arrival.rate_rps = a.at("rate_rps").get<double>();
    if (a.contains("horizon_s")) {
      spec.arrival.horizon_s = a.at("horizon_s").get<double>();
    }
    if (a.contains("num_requests")) {
      spec.arrival.num_requests = a.at("num_requests").get<int64_t>();
    }
    if (j.contains("prompt_len")) {
      spec.prompt_len = length_from_json(j.at("prompt_len"));
    }
    if (j.contains("decode_len")) {
      spec.decode_len = length_from_json(j.at("decode_len"));
    }
    if (j.contains("prefix_groups")) {
      for (const auto& g : j.at("prefix_groups")) {
        spec.prefix_groups.push_back(PrefixGroupSpec{
            g.at("prefix_len").get<int32_t>(), g.at("share").get<double>()});
      }
    }
    spec.group_context_ids = j.value("group_context_ids", false);
    spec.vocab_size = j.value("vocab_size", 32000);
    spec.seed = j.value("seed", uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidSpec, e.what());
  }
  validate(spec);
  return spec;
}

json workload_spec_to_json(const WorkloadSpec& spec) {
  json a;
  a["process"] = spec.arrival.process == ArrivalProcess::kPoisson ? "poisson"
                                                                   : "fixed";
  a["rate_rps"] = spec.arrival.rate_rps;
  if (spec.arrival.horizon_s) {
    a["horizon_s"] = *spec.arrival.horizon_s;
  }
  if (spec.arrival.num_requests) {
    a["num_requests"] = *spec.arrival.num_requests;
  }
  json groups = json::array();
  for (const auto& g : spec.prefix_groups) {
    groups.push_back({{"prefix_len", g.prefix_len}, {"share", g.share}});
  }
  return {{"arrival", a},
          {"prompt_len", length_to_json(spec.prompt_len)},
          {"decode_len", length_to_json(spec.decode_len)},
          {"prefix_groups", groups},
          {"group_context_ids", spec.group_context_ids},
          {"vocab_size", spec.vocab_size},
          {"seed", spec.seed}};
}

void save_trace(const std::vector<Request>& reqs, std::ostream& os,
                TraceFormat format) {
  std::set<int32_t> defined;
  for (const auto& r : reqs) {
    json line;
    line["id"] = r.id;
    line["arrival_us"] = r.arrival;
    const bool compact = format == TraceFormat::kCompact && r.prefix;
    if (compact) {
      const auto len = static_cast<size_t>(r.prefix->length);
      if (defined.insert(r.prefix->group).second) {
        json def;
        def["group_def"] = r.prefix->group;
        def["tokens"] = TokenSeq(r.prompt_tokens.begin(),
                                 r.prompt_tokens.begin() + len);
        os << def.dump() << '\n';
      }
      line["prompt"] = {
          {"group", r.prefix->group},
          {"prefix_len", r.prefix->length},
          {"suffix", TokenSeq(r.prompt_tokens.begin() + len,
                              r.prompt_tokens.end())}};
    } else {
      line["prompt"] = r.prompt_tokens;
      if (r.prefix) {
        line["prefix"] = {{"group", r.prefix->group},
                          {"length", r.prefix->length}};
      }
    }
    line["decode_len"] = r.true_decode_len;
    if (r.context_id) {
      line["context_id"] = *r.context_id;
    }
    if (r.priority != 0) {
      line["priority"] = r.priority;
    }
    os << line.dump() << '\n';
  }
}

void save_trace(const std::vector<Request>& reqs,
                const std::filesystem::path& path, TraceFormat format) {
  std::ofstream os(path);
  SERVESIM_CHECK(os.good(), ErrorCode::kInvalidArgument,
                 "cannot open " + path.string() + " for writing");
  save_trace(reqs, os, format);
}

std::vector<Request> load_trace(std::istream& is) {
  std::vector<Request> out;
  std::map<int32_t, TokenSeq> groups;
  std::string text;
  int64_t line_no = 0;
  while (std::getline(is, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const json j = json::parse(text);
      SERVESIM_CHECK(j.is_object(), ErrorCode::kParseError,
                     "expected a JSON object");
      if (j.contains("group_def")) {
        groups[j.at("group_def").get<int32_t>()] =
            j.at("tokens").get<TokenSeq>();
        continue;
      }
      Request r;
      r.id = j.at("id").get<std::string>();
      r.arrival = j.at("arrival_us").get<Micros>();
      const auto& prompt = j.at("prompt");
      if (prompt.is_array()) {
        r.prompt_tokens = prompt.get<TokenSeq>();
        if (j.contains("prefix")) {
          r.prefix = PrefixRef{j["prefix"].at("group").get<int32_t>(),
                               j["prefix"].at("length").get<int32_t>()};
        }
      } else {
        const auto g = prompt.at("group").get<int32_t>();
        const auto len = prompt.at("prefix_len").get<int32_t>();
        auto it = groups.find(g);
        SERVESIM_CHECK(it != groups.end(), ErrorCode::kParseError,
                       "group " + std::to_string(g) + " used before group_def");
        SERVESIM_CHECK(len >= 0 && static_cast<size_t>(len) <= it->second.size(),
                       ErrorCode::kParseError, "prefix_len exceeds group_def");
        r.prompt_tokens.assign(it->second.begin(), it->second.begin() + len);
        const auto suffix = prompt.at("suffix").get<TokenSeq>();
        r.prompt_tokens.insert(r.prompt_tokens.end(), suffix.begin(),
                               suffix.end());
        r.prefix = PrefixRef{g, len};
      }
      r.true_decode_len = j.at("decode_len").get<int64_t>();
      if (j.contains("context_id") && !j["context_id"].is_null()) {
        r.context_id = j["context_id"].get<std::string>();
      }
      r.priority = j.value("priority", 0);
      validate(r);
      out.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

std::vector<Request> load_trace(const std::filesystem::path& path) {
  std::ifstream is(path);
  SERVESIM_CHECK(is.good(), ErrorCode::kInvalidArgument,
                 "cannot open trace " + path.string());
  return load_trace(is);
}

}  // namespace servesim::workload
