# Copyright 2026 The servesim Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import json

import pytest

import servesim


def test_cost_model_closed_form():
    c = servesim.CostModel()
    assert servesim.iteration_duration(c, 0, 512, 1, 0) == 4000 + 120 * 512
    assert servesim.iteration_duration(c, 8, 0, 0, 40) == pytest.approx(
        10000 + 100 * 8 + 1.6 * 40)
    assert servesim.iteration_wall_time(1000, 300, True) == 1000
    assert servesim.iteration_wall_time(1000, 300, False) == 1300


def test_cell_value():
    assert servesim.cell_value(3.0, 2.0) == pytest.approx(0.5)


def test_predictor_is_pure_and_calibrated():
    p = servesim.DecodePredictor(128, 0.849, seed=4)
    assert p.predict_bucket("a", 10, 700) == p.predict_bucket("a", 10, 700)
    hits = sum(p.predict_bucket(f"r{i}", 10, 1000) == 1000 // 128
               for i in range(4000))
    assert abs(hits / 4000 - 0.849) < 0.03
    with pytest.raises(servesim.ServesimError):
        servesim.DecodePredictor(0, 0.5)


def test_tensor_cache_prefix_match():
    cache = servesim.TensorCache(block_size=4, npu_capacity=16)
    tokens = list(range(10))
    blocks = cache.alloc_blocks(3)
    cache.commit_prefix(tokens, blocks, "ctx")
    matched, ids = cache.match_by_prefix_tokens(tokens[:9] + [99])
    assert matched == 8
    assert ids == blocks[:2]
    assert cache.match_by_id("ctx")[0] == 8
    cache.free(blocks)
    assert cache.match_by_prefix_tokens(tokens)[0] == 0
    with pytest.raises(servesim.ServesimError):
        cache.free(blocks)


def test_route_follows_heatmap_sign():
    members = [servesim.GroupMember("colocated", 0),
               servesim.GroupMember("disagg_pair", 1)]
    pred = servesim.DecodePredictor(128, 1.0)
    for value, want in ((-0.5, "colocated"), (0.5, "disagg_pair")):
        hm = {"prefill_edges": [512, 1024, 2048, 4096, 8192],
              "ratio_edges": [0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
              "cells": [[value] * 6 for _ in range(5)]}
        chosen = servesim.route(list(range(3000)), "q", 100, members, {},
                                json.dumps(hm), pred)
        assert chosen.kind == want


def test_trace_generation_and_run_are_deterministic():
    spec = {"arrival": {"process": "poisson", "rate_rps": 2.0,
                        "num_requests": 20},
            "prompt_len": {"dist": "uniform", "min": 128, "max": 1024},
            "decode_len": {"dist": "uniform", "min": 4, "max": 32},
            "seed": 3}
    reqs = servesim.generate_trace(spec)
    assert len(reqs) == 20
    assert reqs == servesim.generate_trace(spec)
    cfg = servesim.default_config()
    a = servesim.run_trace(cfg, "rr", requests=reqs)
    b = servesim.run_trace(cfg, "rr", requests=reqs)
    assert a["conserved"]
    assert a["summary"]["requests"] == 20
    assert a["requests_csv"] == b["requests_csv"]
    assert a["event_digest"] == b["event_digest"]


def test_scale_bench_orders_paths():
    rows = servesim.scale_bench("llama-70b", path=None, n=2)
    load = {r["load_path"]: r["te_load_us"] for r in rows if r["scenario"] == "te_load"}
    assert load["fork-hccs"] < load["fork-roce"] < load["dram-hit"] < load["dram-miss"]


def test_config_errors_raise():
    with pytest.raises(servesim.ServesimError, match="ConfigError"):
        servesim.run_trace({"bogus": 1}, "rr", requests=[])
    with pytest.raises(servesim.ServesimError):
        servesim.load_config("/nonexistent.json")
