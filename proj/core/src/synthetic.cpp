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

#include "twinclip/synthetic.hpp"

#include <array>
#include <random>
#include <string>

#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"

namespace twinclip {

namespace {

constexpr std::array<const char*, 16> kOnsets = {"b", "d", "g", "h", "k", "l", "m", "n",
                                                 "p", "r", "s", "t", "v", "y", "z", "sh"};
constexpr std::array<const char*, 8> kNuclei = {"a", "e", "i", "o", "u", "ao", "ei", "ua"};
constexpr std::array<const char*, 8> kScenes = {
    "displayed in a quiet temple courtyard",  "shown at a crowded night market",
    "photographed in soft morning light",     "painted in a classical ink style",
    "set on a carved wooden table",           "seen during a family festival",
    "presented in a museum display case",     "captured in a village street scene"};
constexpr std::array<const char*, 8> kCoarse = {
    "elderly robed figure", "steamed round bun",  "long silk garment",  "stringed instrument",
    "tiered wooden tower",  "woven bamboo basket", "painted paper lantern", "carved stone guardian"};

std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng() % kOnsets.size()];
    w += kNuclei[rng() % kNuclei.size()];
  }
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

Eigen::VectorXd unit_gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v / v.norm();
}

}  // namespace

TwinClusterFixture make_twin_cluster(const TwinClusterOptions& options) {
  require(options.pairs >= 1 && options.cards_per_pair >= 1, ErrorCode::InvalidArgument,
          "twin cluster needs at least one pair and one card per pair");
  std::mt19937_64 rng(derive_seed(options.seed, "synthetic/twin-cluster"));
  TwinClusterFixture fx{{}, EmbeddingCache(options.feature_dim)};

  for (std::size_t p = 0; p < options.pairs; ++p) {
    const std::string coarse_text = kCoarse[p % kCoarse.size()];
    const Eigen::VectorXd coarse = unit_gaussian(rng, options.feature_dim);
    std::array<ConceptRecord, 2> concepts;
    std::array<std::string, 2> cue_text;
    std::array<Eigen::VectorXd, 2> cue;
    for (std::size_t side = 0; side < 2; ++side) {
      std::string name;
      do {
        name = pseudo_word(rng, 2 + side);
      } while (side == 1 && name == concepts[0].name);
      cue_text[side] = pseudo_word(rng, 2) + " " + pseudo_word(rng, 1);
      for (char& c : cue_text[side]) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      cue[side] = unit_gaussian(rng, options.feature_dim);
      concepts[side] = {name, "Country" + std::to_string(p % 4),
                        kAllCategories[p % kAllCategories.size()],
                        "A " + coarse_text + " recognised by its " + cue_text[side] + ".",
                        cue_text[side]};
    }
    for (std::size_t j = 0; j < options.cards_per_pair; ++j) {
      TwinCard card;
      card.id = "twin-" + std::to_string(p) + "-" + std::to_string(j);
      for (std::size_t side = 0; side < 2; ++side) {
        Triplet& t = side == 0 ? card.positive : card.negative;
        t.record = concepts[side];
        t.caption = concepts[side].name + " " + coarse_text + " with " + cue_text[side] + " " +
                    kScenes[(j + side) % kScenes.size()];
        const std::string key = card.id + (side == 0 ? "-pos" : "-neg");
        Eigen::VectorXd x = coarse + options.cue_weight * cue[side] +
                            options.noise * unit_gaussian(rng, options.feature_dim);
        fx.images.insert(key, x / x.norm());
        t.image = std::string(kCachePrefix) + key;
      }
      fx.cards.push_back(std::move(card));
    }
  }
  return fx;
}

}  // namespace twinclip
