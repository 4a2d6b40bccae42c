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

#include "twinclip/evaluate.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"

namespace twinclip {

namespace {

using nlohmann::json;

Matrix stack_rows(const std::vector<Vector>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
      fail(ErrorCode::MalformedJson, path.string() + ":" + std::to_string(line_no));
    }
    try {
      fn(row);
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedJson, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
}

std::string join_lines(const std::vector<std::string>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r;
    out += '\n';
  }
  return out;
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      fail(ErrorCode::ConfigError, where + ": unknown key '" + it.key() + "'");
    }
  }
}

}  // namespace

EncoderModel::EncoderModel(const ModelState& state, FeatureResolver& features)
    : EncoderModel(state.merged(), features) {}

EncoderModel::EncoderModel(EncoderPair merged, FeatureResolver& features)
    : encoders_(std::move(merged)), features_(features) {
  if (features_.dim() != encoders_.image.in_dim()) {
    fail(ErrorCode::DimensionMismatch, "feature resolver dim differs from encoder input dim");
  }
}

Vector EncoderModel::embed_image(std::string_view ref) {
  const FeatureVector& fv = features_.image(ref);
  if (fv.degenerate) fail(ErrorCode::DegenerateItem, "image '" + std::string(ref) + "' has zero features");
  return encode(fv, encoders_.image);
}

Vector EncoderModel::embed_text(std::string_view text) {
  const FeatureVector& fv = features_.text(text);
  if (fv.degenerate) fail(ErrorCode::DegenerateItem, "text '" + std::string(text) + "' has zero features");
  return encode(fv, encoders_.text);
}

void validate(const RankingItem& item) {
  if (item.options.empty()) fail(ErrorCode::InvalidArgument, "ranking item has no options");
  if (item.correct_index >= item.options.size()) {
    fail(ErrorCode::InvalidArgument, "correct_index out of range");
  }
  std::set<std::string_view> seen(item.options.begin(), item.options.end());
  if (seen.size() != item.options.size()) {
    fail(ErrorCode::InvalidArgument, "ranking options must be pairwise distinct");
  }
}

std::size_t argmax_lowest(std::span<const double> scores) {
  require(!scores.empty(), ErrorCode::InvalidArgument, "argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

std::size_t rank_statements(EmbeddingModel& model, const RankingItem& item) {
  require(!item.options.empty(), ErrorCode::InvalidArgument, "ranking item has no options");
  const Vector image = model.embed_image(item.image);
  std::vector<double> scores;
  scores.reserve(item.options.size());
  for (const std::string& option : item.options) scores.push_back(image.dot(model.embed_text(option)));
  return argmax_lowest(scores);
}

double ranking_accuracy(EmbeddingModel& model, std::span<const RankingItem> items) {
  require(!items.empty(), ErrorCode::InvalidArgument, "ranking_accuracy needs at least one item");
  std::size_t correct = 0;
  for (const RankingItem& item : items) {
    if (rank_statements(model, item) == item.correct_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

double recall_at_k(const Matrix& sim, std::size_t k, Direction direction) {
  const Matrix& s = sim;
  if (s.rows() != s.cols() || s.rows() == 0) {
    fail(ErrorCode::DimensionMismatch, "retrieval needs a non-empty square similarity matrix");
  }
  const auto n = static_cast<std::size_t>(s.rows());
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > n) {
    fail(ErrorCode::KExceedsCorpus, "k=" + std::to_string(k) + " exceeds corpus size " + std::to_string(n));
  }
  std::size_t hits = 0;
  for (Eigen::Index q = 0; q < s.rows(); ++q) {
    const auto score = [&](Eigen::Index c) {
      return direction == Direction::ImageToText ? s(q, c) : s(c, q);
    };
    const double truth = score(q);
    std::size_t position = 0;
    for (Eigen::Index c = 0; c < s.rows(); ++c) {
      const double v = score(c);
      if (v > truth || (v == truth && c < q)) ++position;
    }
    if (position < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

Matrix retrieval_similarity(EmbeddingModel& model, const RetrievalSet& set) {
  if (set.images.size() != set.texts.size()) {
    fail(ErrorCode::DimensionMismatch, "retrieval set images and texts differ in length");
  }
  std::vector<Vector> images;
  std::vector<Vector> texts;
  for (const auto& ref : set.images) images.push_back(model.embed_image(ref));
  for (const auto& t : set.texts) texts.push_back(model.embed_text(t));
  return stack_rows(images) * stack_rows(texts).transpose();
}

double recall_at_k(EmbeddingModel& model, const RetrievalSet& set, std::size_t k,
                   Direction direction) {
  if (k > set.images.size()) {
    fail(ErrorCode::KExceedsCorpus, "k=" + std::to_string(k) + " exceeds corpus size " +
                                        std::to_string(set.images.size()));
  }
  return recall_at_k(retrieval_similarity(model, set), k, direction);
}

RecallPair bidirectional_recall(EmbeddingModel& model, const RetrievalSet& set, std::size_t k) {
  if (k > set.images.size()) {
    fail(ErrorCode::KExceedsCorpus, "k=" + std::to_string(k) + " exceeds corpus size " +
                                        std::to_string(set.images.size()));
  }
  const Matrix sim = retrieval_similarity(model, set);
  return {recall_at_k(sim, k, Direction::ImageToText), recall_at_k(sim, k, Direction::TextToImage)};
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& fields) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = fields.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != fields.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

std::vector<RankingItem> concept_ranking_items(std::span<const TwinCard> cards) {
  std::vector<RankingItem> items;
  items.reserve(2 * cards.size());
  for (const TwinCard& card : cards) {
    std::vector<std::string> options = {card.positive.record.name, card.negative.record.name};
    items.push_back({card.positive.image, options, 0});
    items.push_back({card.negative.image, options, 1});
  }
  return items;
}

std::vector<RankingItem> grounding_items(std::span<const TwinCard> cards, std::uint64_t seed,
                                         std::string_view tmpl, std::size_t options) {
  require(options >= 2, ErrorCode::InvalidArgument, "need at least two options");
  std::map<std::string, std::set<std::string>> by_country;
  for (const TwinCard& card : cards) {
    for (const Triplet* t : {&card.positive, &card.negative}) {
      by_country[t->record.country].insert(t->record.name);
    }
  }
  std::mt19937_64 rng(derive_seed(seed, "eval/grounding"));
  std::vector<RankingItem> items;
  for (const TwinCard& card : cards) {
    for (const Triplet* t : {&card.positive, &card.negative}) {
      const auto& pool = by_country[t->record.country];
      if (pool.size() < options) continue;
      std::vector<std::string> others;
      for (const auto& c : pool) {
        if (c != t->record.name) others.push_back(c);
      }
      std::shuffle(others.begin(), others.end(), rng);
      others.resize(options - 1);
      others.push_back(t->record.name);
      std::shuffle(others.begin(), others.end(), rng);
      RankingItem item;
      item.image = t->image;
      for (std::size_t i = 0; i < others.size(); ++i) {
        if (others[i] == t->record.name) item.correct_index = i;
        item.options.push_back(fill_template(tmpl, {{"concept", others[i]}, {"country", t->record.country}}));
      }
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::vector<RankingItem> country_items(std::span<const TwinCard> cards,
                                       std::span<const std::string> countries, std::uint64_t seed,
                                       std::string_view tmpl, std::size_t options) {
  require(options >= 2, ErrorCode::InvalidArgument, "need at least two options");
  std::mt19937_64 rng(derive_seed(seed, "eval/country"));
  std::vector<RankingItem> items;
  for (const TwinCard& card : cards) {
    for (const Triplet* t : {&card.positive, &card.negative}) {
      std::vector<std::string> pool;
      for (const auto& c : countries) {
        if (c != t->record.country) pool.push_back(c);
      }
      if (pool.size() + 1 < options) {
        fail(ErrorCode::InvalidArgument, "country list too short for " + std::to_string(options) + " options");
      }
      std::vector<std::string> chosen;
      std::sample(pool.begin(), pool.end(), std::back_inserter(chosen),
                  static_cast<std::ptrdiff_t>(options - 1), rng);
      chosen.push_back(t->record.country);
      std::shuffle(chosen.begin(), chosen.end(), rng);
      RankingItem item;
      item.image = t->image;
      const std::string category(category_name(t->record.category));
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        if (chosen[i] == t->record.country) item.correct_index = i;
        item.options.push_back(fill_template(tmpl, {{"category", category}, {"country", chosen[i]}}));
      }
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::vector<RankingItem> two_choice_items(std::span<const TwinCard> cards, std::string_view tmpl) {
  std::vector<RankingItem> items;
  for (const TwinCard& card : cards) {
    std::vector<std::string> options = {
        fill_template(tmpl, {{"concept", card.positive.record.name}}),
        fill_template(tmpl, {{"concept", card.negative.record.name}})};
    items.push_back({card.positive.image, options, 0});
    items.push_back({card.negative.image, options, 1});
  }
  return items;
}

RetrievalSet caption_retrieval_set(std::span<const TwinCard> cards) {
  RetrievalSet set;
  for (const TwinCard& card : cards) {
    for (const Triplet* t : {&card.positive, &card.negative}) {
      set.images.push_back(t->image);
      set.texts.push_back(t->caption);
    }
  }
  return set;
}

std::vector<RankingItem> load_ranking_items(const std::filesystem::path& path) {
  std::vector<RankingItem> items;
  for_each_jsonl(path, [&](const json& row) {
    RankingItem item;
    item.image = row.at("image").get<std::string>();
    item.options = row.at("options").get<std::vector<std::string>>();
    item.correct_index = row.at("correct_index").get<std::size_t>();
    validate(item);
    items.push_back(std::move(item));
  });
  return items;
}

void save_ranking_items(const std::filesystem::path& path, std::span<const RankingItem> items) {
  std::vector<std::string> rows;
  for (const auto& item : items) {
    rows.push_back(json{{"image", item.image}, {"options", item.options}, {"correct_index", item.correct_index}}.dump());
  }
  atomic_write(path, join_lines(rows));
}

RetrievalSet load_retrieval_set(const std::filesystem::path& path) {
  RetrievalSet set;
  for_each_jsonl(path, [&](const json& row) {
    set.images.push_back(row.at("image").get<std::string>());
    set.texts.push_back(row.at("text").get<std::string>());
  });
  return set;
}

void save_retrieval_set(const std::filesystem::path& path, const RetrievalSet& set) {
  require(set.images.size() == set.texts.size(), ErrorCode::DimensionMismatch,
          "retrieval set images and texts differ in length");
  std::vector<std::string> rows;
  for (std::size_t i = 0; i < set.images.size(); ++i) {
    rows.push_back(json{{"image", set.images[i]}, {"text", set.texts[i]}}.dump());
  }
  atomic_write(path, join_lines(rows));
}

SuiteConfig parse_suite_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) fail(ErrorCode::ConfigError, "eval suite must be an object");
  reject_unknown(doc, {"ranking", "retrieval"}, "eval");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  SuiteConfig suite;
  try {
    for (const auto& t : doc.value("ranking", json::array())) {
      reject_unknown(t, {"name", "path"}, "eval.ranking[]");
      suite.ranking.push_back({t.at("name").get<std::string>(), resolve(t.at("path").get<std::string>())});
    }
    for (const auto& t : doc.value("retrieval", json::array())) {
      reject_unknown(t, {"name", "path", "k"}, "eval.retrieval[]");
      suite.retrieval.push_back({t.at("name").get<std::string>(), resolve(t.at("path").get<std::string>()),
                                 t.value("k", std::size_t{5})});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("eval suite: ") + e.what());
  }
  return suite;
}

EvalReport eval_report(EmbeddingModel& model, const SuiteConfig& suite, std::string checkpoint_id) {
  EvalReport report;
  report.checkpoint_id = std::move(checkpoint_id);
  for (const auto& task : suite.ranking) {
    const auto items = load_ranking_items(task.path);
    report.ranking[task.name] = {ranking_accuracy(model, items), items.size()};
  }
  for (const auto& task : suite.retrieval) {
    const auto set = load_retrieval_set(task.path);
    report.retrieval[task.name] = {task.k, set.images.size(), bidirectional_recall(model, set, task.k)};
  }
  return report;
}

json to_json(const EvalReport& report) {
  json ranking = json::object();
  for (const auto& [name, r] : report.ranking) {
    ranking[name] = {{"accuracy", r.accuracy}, {"items", r.items}};
  }
  json retrieval = json::object();
  for (const auto& [name, r] : report.retrieval) {
    retrieval[name] = {{"k", r.k},
                       {"pairs", r.pairs},
                       {"image_to_text", r.recall.image_to_text},
                       {"text_to_image", r.recall.text_to_image},
                       {"mean", r.recall.mean()}};
  }
  return json{{"checkpoint", report.checkpoint_id}, {"ranking", ranking}, {"retrieval", retrieval}};
}

}  // namespace twinclip
