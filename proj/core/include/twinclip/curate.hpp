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

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "twinclip/backend.hpp"
#include "twinclip/featurize.hpp"
#include "twinclip/templates.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

/// Raw bottom-up candidate, one JSON object per line:
/// `{"title", "definition", "caption"?, "image_url"?}`.
struct RawCandidate {
  std::string title;
  std::string definition;
  std::string caption;
  std::string image_url;
};

std::vector<RawCandidate> load_candidates(const std::filesystem::path& path);

enum class FilterDecision { Keep, Discard };

struct BottomUpResult {
  FilterDecision decision = FilterDecision::Discard;
  /// True when the reply named neither option and the strict default applied.
  bool unparseable = false;
};

/// Strict pre-filter: only an unambiguous "B" keeps the candidate.
BottomUpResult bottom_up_filter(const RawCandidate& candidate, Backend& judge,
                                const TemplateSet& templates);

/// Extracts country, category, context and visual features for a kept candidate.
ConceptRecord bottom_up_classify(const RawCandidate& candidate, Backend& generator,
                                 const TemplateSet& templates);

ConceptRecord top_down_generate(std::string_view country, Category category, Backend& generator,
                                const TemplateSet& templates);
/// Rejects labels outside the taxonomy with InvalidArgument before any call.
ConceptRecord top_down_generate(std::string_view country, std::string_view category,
                                Backend& generator, const TemplateSet& templates);

/// Same-category, different-name counterpart. The twin keeps the input's
/// country unless the reply names one.
ConceptRecord twin_match(const ConceptRecord& record, Backend& generator,
                         const TemplateSet& templates);

struct CaptionSet {
  std::vector<std::string> captions;
  std::size_t duplicates = 0;
};

/// Parses a numbered list of captions and drops repeats. Fewer than ceil(k/2)
/// usable captions is a ParseFailure.
CaptionSet generate_captions(const ConceptRecord& record, std::size_t k, Backend& generator,
                             const TemplateSet& templates);

GeneratedImage synthesize_image(std::string_view caption, Backend& image_backend);

struct JudgeScores {
  int authenticity = 0;
  int consistency = 0;
  int fidelity = 0;

  double mean() const noexcept { return (authenticity + consistency + fidelity) / 3.0; }
  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

void validate(const JudgeScores& scores);

/// First standalone integer in the reply; it must lie in 1..5.
int parse_score(std::string_view reply);

JudgeScores judge_image(std::string_view image_ref, const ConceptRecord& record, Backend& judge,
                        const TemplateSet& templates);

enum class QualityDecision { Pass, Reject };

/// Reject when any dimension scores 1 or the mean falls below 3.
QualityDecision quality_filter(const JudgeScores& scores);

struct ScoreStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct CategorySummary {
  std::size_t evaluated = 0;      // images judged
  std::size_t passed_filter = 0;  // images passing on their own
  std::size_t retained = 0;       // images emitted in a card (both sides passed)
  /// Over retained images, in order authenticity, consistency, fidelity.
  std::array<ScoreStats, 3> scores{};

  double pass_rate() const noexcept {
    return evaluated == 0 ? 0.0 : static_cast<double>(retained) / static_cast<double>(evaluated);
  }
};

struct FilterSummary {
  std::map<Category, CategorySummary> per_category;
  std::size_t cards = 0;
  /// Skip and warning counters keyed by reason.
  std::map<std::string, std::size_t> skipped;

  std::size_t evaluated() const noexcept;
  std::size_t retained() const noexcept;
  double pass_rate() const noexcept;
};

nlohmann::json to_json(const FilterSummary& summary);

enum class BackendKind { Mock, Http };

struct RetryPolicy {
  std::size_t attempts = 3;
  std::chrono::milliseconds backoff{250};
  std::chrono::seconds timeout{60};
};

struct PipelineConfig {
  /// Top-down grid rows; empty disables top-down sourcing.
  std::vector<std::string> countries;
  std::vector<Category> categories{kAllCategories.begin(), kAllCategories.end()};
  /// Bottom-up fixture corpus; empty disables bottom-up sourcing.
  std::filesystem::path corpus;
  std::size_t captions_per_concept = 10;
  /// Per-category overrides of captions_per_concept.
  std::map<Category, std::size_t> captions_per_category;
  std::size_t concurrency = 4;
  RetryPolicy retry;
  BackendKind backend = BackendKind::Mock;
  std::string endpoint;  // falls back to BACKEND_URL
  std::uint64_t seed = 0;
  std::size_t feature_dim = kDefaultFeatureDim;
  JudgeMode mock_judge = JudgeMode::Constant;
  /// Optional directory of template overrides.
  std::filesystem::path template_dir;

  void validate() const;
  std::size_t captions_for(Category c) const;
};

nlohmann::json to_json(const PipelineConfig& cfg);
/// Unknown keys raise ConfigError. Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = {});

struct PipelineResult {
  std::vector<TwinCard> cards;  // sorted by id
  FilterSummary summary;
  /// Mock image vectors keyed as referenced by the cards.
  EmbeddingCache images;
  std::vector<std::string> warnings;
  std::size_t backend_failures = 0;
};

/// Stages run in order: concept sourcing, twin matching, then captions,
/// images and judging. Per-item failures are counted, never fatal.
PipelineResult run_pipeline(const PipelineConfig& cfg, Backend& backend,
                            std::span<const RawCandidate> candidates);

/// Builds the configured backend. `image_dir` receives HTTP-generated rasters.
std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg,
                                      const std::filesystem::path& image_dir);

/// Writes `cards.jsonl`, `summary.json` and, when non-empty, `images.cache`.
void write_pipeline_outputs(const PipelineResult& result, const std::filesystem::path& out_dir);

}  // namespace twinclip
