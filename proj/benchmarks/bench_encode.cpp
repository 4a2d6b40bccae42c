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


#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "twinclip/encoder.hpp"
#include "twinclip/featurize.hpp"

namespace {

void BM_TextFeatures(benchmark::State& state) {
  const std::string text = "A bronze ding vessel with taotie motifs, Shang dynasty";
  for (auto _ : state) benchmark::DoNotOptimize(twinclip::text_features(text, 256));
}
BENCHMARK(BM_TextFeatures);

void BM_EncodeBatch(benchmark::State& state) {
  const auto n = state.range(0);
  constexpr std::size_t kFeatures = 256;
  constexpr std::size_t kDim = 64;
  const auto pair = twinclip::init_encoders(kDim, kFeatures, 3);
  const auto lora = twinclip::init_lora(kDim, kFeatures, 8, 0.0, 4);
  twinclip::Matrix features = twinclip::Matrix::Random(kFeatures, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(twinclip::encode_batch(features, pair.text, &lora));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_EncodeBatch)->RangeMultiplier(4)->Range(8, 512);

}  // namespace
