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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "twinclip/featurize.hpp"
#include "twinclip/model.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

/// One statement-ranking question: pick the option closest to the image.
struct RankingItem {
  std::string image;
  std::vector<std::string> options;
  std::size_t correct_index = 0;
};

/// Index-aligned image/text pairs.
struct RetrievalSet {
  std::vector<std::string> images;
  std::vector<std::string> texts;
};

enum class Direction { ImageToText, TextToImage };

class EmbeddingModel {
 public:
  virtual ~EmbeddingModel() = default;
  virtual Vector embed_image(std::string_view ref) = 0;
  virtual Vector embed_text(std::string_view text) = 0;
};

/// Inference wrapper: adapters are merged into the base weights up front.
class EncoderModel final : public EmbeddingModel {
 public:
  EncoderModel(const ModelState& state, FeatureResolver& features);
  EncoderModel(EncoderPair merged, FeatureResolver& features);

  Vector embed_image(std::string_view ref) override;
  Vector embed_text(std::string_view text) override;

 private:
  EncoderPair encoders_;
  FeatureResolver& features_;
};

void validate(const RankingItem& item);

/// Argmax with ties broken towards the lowest index.
std::size_t argmax_lowest(std::span<const double> scores);

std::size_t rank_statements(EmbeddingModel& model, const RankingItem& item);
double ranking_accuracy(EmbeddingModel& model, std::span<const RankingItem> items);

/// Recall@k from a precomputed similarity matrix (rows = images, cols = texts).
/// A query's counterpart occupies position #{strictly better} + #{equal with
/// lower index}; it is a hit when that position is below k.
double recall_at_k(const Matrix& sim, std::size_t k, Direction direction);
double recall_at_k(EmbeddingModel& model, const RetrievalSet& set, std::size_t k,
                   Direction direction);
Matrix retrieval_similarity(EmbeddingModel& model, const RetrievalSet& set);

struct RecallPair {
  double image_to_text = 0.0;
  double text_to_image = 0.0;
  double mean() const noexcept { return 0.5 * (image_to_text + text_to_image); }
};
RecallPair bidirectional_recall(EmbeddingModel& model, const RetrievalSet& set, std::size_t k);

// Item construction -------------------------------------------------------

inline constexpr std::string_view kGroundingTemplate = "The item in the picture is {concept} in {country}.";
inline constexpr std::string_view kRetrievalTemplate = "The picture depicts a kind of {category} in {country}.";
inline constexpr std::string_view kTwoChoiceTemplate = "There is {concept} in the image";

/// Replaces each `{name}` slot present in `fields`; other braces are kept.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& fields);

/// Twin concept ranking: for every card, the positive image and the negative
/// image each choose between the two bare concept names.
std::vector<RankingItem> concept_ranking_items(std::span<const TwinCard> cards);

/// Four-way grounding items: the correct concept plus three other concepts
/// from the same country (cards whose country has fewer than four concepts
/// are skipped).
std::vector<RankingItem> grounding_items(std::span<const TwinCard> cards, std::uint64_t seed,
                                         std::string_view tmpl = kGroundingTemplate,
                                         std::size_t options = 4);

/// Four-way country items: distractor countries drawn uniformly without
/// replacement from `countries`.
std::vector<RankingItem> country_items(std::span<const TwinCard> cards,
                                       std::span<const std::string> countries, std::uint64_t seed,
                                       std::string_view tmpl = kRetrievalTemplate,
                                       std::size_t options = 4);

/// Two-choice items naming the depicted concept and its twin.
std::vector<RankingItem> two_choice_items(std::span<const TwinCard> cards,
                                          std::string_view tmpl = kTwoChoiceTemplate);

/// Every card side contributes one (image, caption) pair.
RetrievalSet caption_retrieval_set(std::span<const TwinCard> cards);

// Files and reports --------------------------------------------------------

std::vector<RankingItem> load_ranking_items(const std::filesystem::path& path);
void save_ranking_items(const std::filesystem::path& path, std::span<const RankingItem> items);
RetrievalSet load_retrieval_set(const std::filesystem::path& path);
void save_retrieval_set(const std::filesystem::path& path, const RetrievalSet& set);

struct RankingTask {
  std::string name;
  std::filesystem::path path;
};
struct RetrievalTask {
  std::string name;
  std::filesystem::path path;
  std::size_t k = 5;
};
struct SuiteConfig {
  std::vector<RankingTask> ranking;
  std::vector<RetrievalTask> retrieval;
};

/// Unknown keys are rejected; relative paths resolve against `base_dir`.
SuiteConfig parse_suite_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

struct RankingResult {
  double accuracy = 0.0;
  std::size_t items = 0;
};
struct RetrievalResult {
  std::size_t k = 5;
  std::size_t pairs = 0;
  RecallPair recall;
};
struct EvalReport {
  std::string checkpoint_id;
  std::map<std::string, RankingResult> ranking;
  std::map<std::string, RetrievalResult> retrieval;
};

EvalReport eval_report(EmbeddingModel& model, const SuiteConfig& suite,
                       std::string checkpoint_id = {});
nlohmann::json to_json(const EvalReport& report);

}  // namespace twinclip
