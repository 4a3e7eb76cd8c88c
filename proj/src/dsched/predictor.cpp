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

#include "servesim/dsched/predictor.h"

#include <algorithm>

#include "servesim/common/error.h"
#include "servesim/common/hash.h"

namespace servesim::dsched {

void validate(const DecodePredictor& predictor) {
  SERVESIM_CHECK(predictor.bucket_size >= 1, ErrorCode::kConfigError,
                 "bucket_size must be >= 1");
  SERVESIM_CHECK(predictor.accuracy >= 0.0 && predictor.accuracy <= 1.0,
                 ErrorCode::kConfigError, "accuracy must be in [0, 1]");
}

int64_t DecodePredictor::predict_bucket(const workload::Request& request) const {
  const int64_t truth = request.true_decode_len / bucket_size;
  SplitMixStream rng(mix64(seed ^ fnv1a(request.id)));
  if (rng.uniform() < accuracy) {
    return truth;
  }
  int64_t distance = 1;
  while (rng.uniform() < 0.5) {
    ++distance;
  }
  const int64_t direction = rng.uniform() < 0.5 ? -1 : 1;
  return std::max<int64_t>(0, truth + direction * distance);
}

double DecodePredictor::predicted_length(
    const workload::Request& request) const {
  return (static_cast<double>(predict_bucket(request)) + 0.5) *
         static_cast<double>(bucket_size);
}

}  // namespace servesim::dsched
