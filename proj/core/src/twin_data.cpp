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

#include "twinclip/twin_data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"

namespace twinclip {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 8> kCategoryNames = {
    "Cuisine", "Clothing", "Animal & Plants", "Art",
    "Architecture", "Daily Life", "Symbol", "Festival"};

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string string_field(const json& obj, const std::string& name, const std::string& path) {
  auto it = obj.find(name);
  if (it == obj.end()) fail(ErrorCode::MissingField, path + name);
  if (!it->is_string()) {
    fail(ErrorCode::InvariantViolation, path + name + " must be a string");
  }
  return it->get<std::string>();
}

Triplet parse_triplet(const json& obj, const std::string& side) {
  const std::string prefix = side + ".";
  if (!obj.is_object()) fail(ErrorCode::InvariantViolation, side + " must be an object");
  Triplet t;
  t.record.name = string_field(obj, "concept", prefix);
  t.record.country = string_field(obj, "country", prefix);
  const std::string category = string_field(obj, "category", prefix);
  auto parsed = parse_category(category);
  if (!parsed) {
    fail(ErrorCode::InvariantViolation, prefix + "category: unknown category '" + category + "'");
  }
  t.record.category = *parsed;
  t.record.context = string_field(obj, "context", prefix);
  t.record.visual_features = string_field(obj, "visual_features", prefix);
  t.caption = string_field(obj, "caption", prefix);
  t.image = string_field(obj, "image", prefix);
  return t;
}

json triplet_json(const Triplet& t) {
  return json{{"concept", t.record.name},
              {"country", t.record.country},
              {"category", category_name(t.record.category)},
              {"context", t.record.context},
              {"visual_features", t.record.visual_features},
              {"caption", t.caption},
              {"image", t.image}};
}

void validate_triplet(const Triplet& t, const std::string& side) {
  try {
    validate(t.record);
  } catch (const Error& e) {
    fail(e.code(), side + "." + e.detail());
  }
  if (blank(t.caption)) fail(ErrorCode::InvariantViolation, side + ".caption: empty");
  if (blank(t.image)) fail(ErrorCode::InvariantViolation, side + ".image: empty");
}

}  // namespace

std::string_view category_name(Category c) noexcept {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<Category> parse_category(std::string_view label) noexcept {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (label == kCategoryNames[i]) return static_cast<Category>(i);
  }
  if (label == "Animals & Plants") return Category::AnimalPlants;
  return std::nullopt;
}

void validate(const ConceptRecord& record) {
  if (blank(record.name)) fail(ErrorCode::InvariantViolation, "concept: empty");
  if (blank(record.context)) fail(ErrorCode::InvariantViolation, "context: empty");
  if (blank(record.visual_features)) {
    fail(ErrorCode::InvariantViolation, "visual_features: empty");
  }
}

void validate(const TwinCard& card) {
  if (blank(card.id)) fail(ErrorCode::InvariantViolation, "id: empty");
  validate_triplet(card.positive, "positive");
  validate_triplet(card.negative, "negative");
  if (card.positive.record.name == card.negative.record.name) {
    fail(ErrorCode::InvariantViolation,
         "identical concepts: both sides name '" + card.positive.record.name + "'");
  }
  if (card.positive.record.category != card.negative.record.category) {
    fail(ErrorCode::InvariantViolation, "category mismatch between positive and negative");
  }
}

TwinCard parse_twin_card(std::string_view line) {
  json doc = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) fail(ErrorCode::MalformedJson, "line is not valid JSON");
  if (!doc.is_object()) fail(ErrorCode::MalformedJson, "line is not a JSON object");
  TwinCard card;
  card.id = string_field(doc, "id", "");
  for (const char* side : {"positive", "negative"}) {
    if (!doc.contains(side)) fail(ErrorCode::MissingField, side);
  }
  card.positive = parse_triplet(doc["positive"], "positive");
  card.negative = parse_triplet(doc["negative"], "negative");
  validate(card);
  return card;
}

json to_json(const TwinCard& card) {
  return json{{"id", card.id},
              {"positive", triplet_json(card.positive)},
              {"negative", triplet_json(card.negative)}};
}

std::string serialize_twin_card(const TwinCard& card) { return to_json(card).dump(); }

std::size_t count_words(std::string_view text) noexcept {
  std::size_t words = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

DatasetStats compute_stats(std::span<const TwinCard> cards) {
  DatasetStats stats;
  stats.card_count = cards.size();
  std::size_t words = 0;
  for (const TwinCard& card : cards) {
    ++stats.per_category_counts[card.positive.record.category];
    words += count_words(card.positive.caption) + count_words(card.negative.caption);
  }
  if (!cards.empty()) {
    stats.mean_caption_words = static_cast<double>(words) / (2.0 * cards.size());
  }
  return stats;
}

json to_json(const DatasetStats& stats) {
  json per = json::object();
  for (const auto& [category, count] : stats.per_category_counts) {
    per[std::string(category_name(category))] = count;
  }
  return json{{"card_count", stats.card_count},
              {"per_category_counts", per},
              {"mean_caption_words", stats.mean_caption_words}};
}

Dataset load_dataset(const std::filesystem::path& path, ParseMode mode) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      out.cards.push_back(parse_twin_card(line));
    } catch (const Error& e) {
      if (mode == ParseMode::Strict) {
        fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.detail());
      }
      out.skipped.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) fail(ErrorCode::IoFailure, "read error on " + path.string());
  if (out.cards.empty()) fail(ErrorCode::EmptyDataset, path.string() + " holds no valid cards");
  out.stats = compute_stats(out.cards);
  return out;
}

void atomic_write(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoFailure, "rename to " + path.string() + ": " + ec.message());
}

void write_dataset(const std::filesystem::path& path, std::span<const TwinCard> cards) {
  std::string body;
  for (const TwinCard& card : cards) {
    body += serialize_twin_card(card);
    body += '\n';
  }
  atomic_write(path, body);
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : dataset_size_(dataset_size), batch_size_(batch_size), seed_(seed) {
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  require(dataset_size >= 1, ErrorCode::EmptyDataset, "cannot batch an empty dataset");
  if (batch_size > dataset_size) {
    fail(ErrorCode::BatchTooLarge, "batch_size " + std::to_string(batch_size) +
                                       " exceeds dataset size " + std::to_string(dataset_size));
  }
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> order(dataset_size_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix64(seed_ ^ mix64(epoch_index + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(batches_per_epoch());
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].assign(order.begin() + static_cast<std::ptrdiff_t>(b * batch_size_),
                  order.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size_));
  }
  return out;
}

std::vector<std::vector<TwinCard>> batches(std::span<const TwinCard> dataset,
                                           std::size_t batch_size, std::uint64_t seed) {
  BatchSampler sampler(dataset.size(), batch_size, seed);
  std::vector<std::vector<TwinCard>> out;
  for (const auto& idx : sampler.epoch(0)) {
    auto& batch = out.emplace_back();
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(dataset[i]);
  }
  return out;
}

bool is_held_out(std::string_view card_id, std::uint64_t seed, double fraction) noexcept {
  return unit_interval(mix64(fnv1a64(card_id) ^ mix64(seed))) < fraction;
}

}  // namespace twinclip
