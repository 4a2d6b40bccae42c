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
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace twinclip {

/// The fixed eight-way cultural taxonomy.
enum class Category {
  Cuisine,
  Clothing,
  AnimalPlants,
  Art,
  Architecture,
  DailyLife,
  Symbol,
  Festival,
};

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::Cuisine, Category::Clothing,     Category::AnimalPlants, Category::Art,
    Category::Architecture, Category::DailyLife, Category::Symbol,       Category::Festival};

std::string_view category_name(Category c) noexcept;

/// Accepts the canonical label and the "Animals & Plants" spelling; case-sensitive
/// otherwise so that free-form model output does not silently widen the taxonomy.
std::optional<Category> parse_category(std::string_view label) noexcept;

struct ConceptRecord {
  std::string name;
  std::string country;
  Category category = Category::Cuisine;
  std::string context;
  std::string visual_features;

  friend bool operator==(const ConceptRecord&, const ConceptRecord&) = default;
};

/// `image` is either a raster file path or `cache:<key>` into an embedding cache.
struct Triplet {
  ConceptRecord record;
  std::string caption;
  std::string image;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TwinCard {
  std::string id;
  Triplet positive;
  Triplet negative;

  friend bool operator==(const TwinCard&, const TwinCard&) = default;
};

struct DatasetStats {
  std::size_t card_count = 0;
  std::map<Category, std::size_t> per_category_counts;
  double mean_caption_words = 0.0;
};

void validate(const ConceptRecord& record);
void validate(const TwinCard& card);

TwinCard parse_twin_card(std::string_view line);
nlohmann::json to_json(const TwinCard& card);
std::string serialize_twin_card(const TwinCard& card);

std::size_t count_words(std::string_view text) noexcept;
DatasetStats compute_stats(std::span<const TwinCard> cards);
nlohmann::json to_json(const DatasetStats& stats);

enum class ParseMode { Strict, Lenient };

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct Dataset {
  std::vector<TwinCard> cards;
  DatasetStats stats;
  std::vector<LineError> skipped;  // only populated in lenient mode
};

/// Strict mode throws on the first bad line, with the 1-based line number in
/// the error detail. Blank lines are ignored in both modes.
Dataset load_dataset(const std::filesystem::path& path, ParseMode mode = ParseMode::Strict);

/// Writes one card per line, atomically.
void write_dataset(const std::filesystem::path& path, std::span<const TwinCard> cards);

/// Seeded epoch shuffling over card indices. The final partial batch is
/// dropped, so every epoch yields floor(n / batch_size) full batches.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

  std::size_t batches_per_epoch() const noexcept { return dataset_size_ / batch_size_; }
  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;

 private:
  std::size_t dataset_size_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

/// First-epoch batches materialized as cards.
std::vector<std::vector<TwinCard>> batches(std::span<const TwinCard> dataset,
                                           std::size_t batch_size, std::uint64_t seed);

/// Deterministic held-out membership keyed on the card id.
bool is_held_out(std::string_view card_id, std::uint64_t seed, double fraction) noexcept;

/// Writes `contents` to a sibling temp file then renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view contents);

}  // namespace twinclip
