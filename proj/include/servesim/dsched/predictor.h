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

#include "servesim/workload/request.h"

namespace servesim::dsched {

// Noisy decode-length classifier. Exact bucket with probability accuracy;
// otherwise a bucket at distance k >= 1 with P(k) = 0.5^k in a uniformly
// chosen direction, clamped at bucket 0. Pure in (seed, request id).
struct DecodePredictor {
  int64_t bucket_size = 128;
  double accuracy = 0.849;
  uint64_t seed = 0;

  int64_t predict_bucket(const workload::Request& request) const;
  // Midpoint of the predicted bucket, in tokens.
  double predicted_length(const workload::Request& request) const;
};

void validate(const DecodePredictor& predictor);

}  // namespace servesim::dsched
