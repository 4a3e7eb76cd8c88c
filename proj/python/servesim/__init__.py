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
"""Python interface to the servesim simulator."""

import json
from typing import Any, Dict, List, Optional, Sequence, Union

from ._servesim import (
    CostModel,
    DecodePredictor,
    GroupMember,
    ServesimError,
    TensorCache,
    cell_value,
    iteration_duration,
    iteration_wall_time,
    route,
)
from . import _servesim

__all__ = [
    "CostModel",
    "DecodePredictor",
    "GroupMember",
    "ServesimError",
    "TensorCache",
    "cell_value",
    "default_config",
    "generate_trace",
    "iteration_duration",
    "iteration_wall_time",
    "load_config",
    "profile_heatmap",
    "route",
    "run_trace",
    "scale_bench",
]

Config = Dict[str, Any]


def _dump(obj: Union[str, Dict[str, Any], None]) -> Optional[str]:
    if obj is None or isinstance(obj, str):
        return obj
    return json.dumps(obj)


def default_config() -> Config:
    return json.loads(_servesim._default_config())


def load_config(path: str) -> Config:
    return json.loads(_servesim._load_config(str(path)))


def generate_trace(spec: Config) -> List[Dict[str, Any]]:
    """Requests as dicts with id, arrival_us, prompt and decode_len."""
    lines = _servesim._generate_trace(json.dumps(spec)).splitlines()
    return [json.loads(line) for line in lines if line]


def profile_heatmap(config: Config, rps_grid: Sequence[float] = (),
                    seed: int = 0) -> Dict[str, Any]:
    return json.loads(
        _servesim._profile_heatmap(json.dumps(config), list(rps_grid), seed))


def run_trace(config: Config, policy: str = "combined",
              heatmap: Union[str, Dict[str, Any], None] = None,
              requests: Optional[List[Dict[str, Any]]] = None) -> Dict[str, Any]:
    """Runs requests (or the config workload) and returns summary and CSV."""
    trace = None
    if requests is not None:
        trace = "".join(json.dumps(r) + "\n" for r in requests)
    return json.loads(
        _servesim._run_trace(json.dumps(config), policy, _dump(heatmap), trace))


def scale_bench(model: str, path: Optional[str] = None, n: Optional[int] = None,
                config: Optional[Config] = None) -> List[Dict[str, Any]]:
    cfg = default_config() if config is None else config
    return json.loads(_servesim._scale_bench(json.dumps(cfg), model, path, n))
