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

#include <cmath>
#include <cstdint>

namespace servesim {

// Simulated time, integer microseconds.
using Micros = int64_t;

constexpr Micros kMicrosPerSecond = 1'000'000;

inline Micros seconds_to_micros(double s) {
  return static_cast<Micros>(std::llround(s * 1e6));
}

inline double micros_to_seconds(Micros us) {
  return static_cast<double>(us) / 1e6;
}

// Rounds a fractional duration up so that events never fire early.
inline Micros ceil_micros(double us) {
  return static_cast<Micros>(std::ceil(us - 1e-9));
}

}  // namespace servesim
