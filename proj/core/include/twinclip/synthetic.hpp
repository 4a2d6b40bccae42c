// Copyright 2026 The twinclip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "twinclip/featurize.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

/// A synthetic Twin Card corpus whose image features mimic fine-grained
/// cultural twins: both concepts of a pair share one dominant "coarse"
/// direction and differ only in a weaker per-concept cue direction, plus
/// per-image noise. Images live in the returned cache under `cache:` keys.
struct TwinClusterOptions {
  std::size_t pairs = 16;
  std::size_t cards_per_pair = 4;
  std::size_t feature_dim = kDefaultFeatureDim;
  double cue_weight = 0.5;
  double noise = 0.15;
  std::uint64_t seed = 7;
};

struct TwinClusterFixture {
  std::vector<TwinCard> cards;
  EmbeddingCache images;
};

TwinClusterFixture make_twin_cluster(const TwinClusterOptions& options);

}  // namespace twinclip
