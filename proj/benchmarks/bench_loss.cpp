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

#include <random>

#include "twinclip/loss.hpp"

namespace {

using twinclip::Matrix;

Matrix unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  m.rowwise().normalize();
  return m;
}

void BM_ClipLoss(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = state.range(0);
  const Matrix img = unit_rows(n, 64, rng);
  const Matrix txt = unit_rows(n, 64, rng);
  for (auto _ : state) benchmark::DoNotOptimize(twinclip::clip_loss(img, txt, 0.07));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ClipLoss)->RangeMultiplier(4)->Range(8, 512);

void BM_CultureClipLoss(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto n = state.range(0);
  twinclip::EmbeddingBatch batch;
  for (auto& role : batch.roles) role = unit_rows(n, 64, rng);
  const twinclip::LossConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(twinclip::cultureclip_loss(batch, cfg));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_CultureClipLoss)->RangeMultiplier(4)->Range(8, 512);

}  // namespace
