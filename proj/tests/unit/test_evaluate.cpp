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


#include <set>

#include "support/checks.hpp"
#include "twinclip/evaluate.hpp"
#include "twinclip/model.hpp"

namespace tc = twinclip;
using tc::Matrix;
using tc::Vector;
using tc::testing::TableModel;
using tc::testing::TempDir;

namespace {

// Brute-force accuracy: every option scored by an explicit dot-product loop.
double oracle_accuracy(tc::EmbeddingModel& model, const std::vector<tc::RankingItem>& items) {
  std::size_t correct = 0;
  for (const auto& item : items) {
    const Vector img = model.embed_image(item.image);
    std::vector<double> sims;
    for (const auto& opt : item.options) {
      const Vector t = model.embed_text(opt);
      double s = 0.0;
      for (Eigen::Index k = 0; k < img.size(); ++k) s += img[k] * t[k];
      sims.push_back(s);
    }
    if (tc::testing::oracle_rank(sims, item.correct_index) == 0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(items.size());
}

std::vector<tc::RankingItem> random_items(std::size_t n, std::size_t options, std::mt19937_64& rng) {
  std::vector<tc::RankingItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    tc::RankingItem item;
    item.image = "img-" + std::to_string(i);
    for (std::size_t o = 0; o < options; ++o) item.options.push_back("opt-" + std::to_string(i) + "-" + std::to_string(o));
    item.correct_index = rng() % options;
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<tc::TwinCard> country_cards() {
  std::vector<tc::TwinCard> cards;
  for (int i = 0; i < 6; ++i) {
    auto card = tc::testing::make_card("c" + std::to_string(i), "pos" + std::to_string(i), "neg" + std::to_string(i));
    card.negative.record.country = "Japan";
    cards.push_back(card);
  }
  return cards;
}

}  // namespace

TEST_SUITE("evaluate") {
  TEST_CASE("the matching option wins over its negation") {
    TableModel model(3);
    Vector e(3);
    e << 0.0, 0.6, 0.8;
    model.set("image", e);
    model.set("same", e);
    model.set("opposite", -e);
    CHECK(tc::rank_statements(model, {"image", {"opposite", "same"}, 1}) == 1);
    CHECK(tc::rank_statements(model, {"image", {"same", "opposite"}, 0}) == 0);
  }

  TEST_CASE("ties go to the lowest index") {
    TableModel model(4, 1);
    CHECK(tc::rank_statements(model, {"image", {"x", "x", "x", "x"}, 2}) == 0);
    const std::vector<double> scores{0.3, 0.7, 0.7, 0.1};
    CHECK(tc::argmax_lowest(scores) == 1);
  }

  TEST_CASE("accuracy matches the brute-force oracle") {
    std::mt19937_64 rng(1);
    TableModel model(16, 2);
    const auto items = random_items(20, 4, rng);
    CHECK(tc::ranking_accuracy(model, items) == oracle_accuracy(model, items));
  }

  TEST_CASE("all-correct fixture scores 1") {
    TableModel model(4);
    std::vector<tc::RankingItem> items;
    for (int i = 0; i < 4; ++i) {
      Vector v = Vector::Zero(4);
      v[i] = 1.0;
      const std::string id = std::to_string(i);
      model.set("img" + id, v);
      model.set("good" + id, v);
      model.set("bad" + id, -v);
      items.push_back({"img" + id, {"bad" + id, "good" + id}, 1});
    }
    CHECK(tc::ranking_accuracy(model, items) == 1.0);
  }

  TEST_CASE("a random model sits at chance") {
    std::mt19937_64 rng(2);
    TableModel model(32, 3);
    const auto items = random_items(1000, 4, rng);
    const double acc = tc::ranking_accuracy(model, items);
    MESSAGE("random-model accuracy ", acc);
    CHECK(acc == doctest::Approx(0.25).epsilon(0.05 / 0.25));
    CHECK(std::abs(acc - 0.25) <= 0.05);
  }

  TEST_CASE("ranking preconditions") {
    TableModel model(4);
    const std::vector<tc::RankingItem> none;
    CHECK_ERROR_CODE(tc::ranking_accuracy(model, none), tc::ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(tc::validate(tc::RankingItem{"i", {"a", "b"}, 2}), tc::ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(tc::validate(tc::RankingItem{"i", {"a", "a"}, 0}), tc::ErrorCode::InvalidArgument);
  }

  TEST_CASE("recall covers the corpus when k equals n") {
    std::mt19937_64 rng(3);
    const Matrix sim = tc::testing::random_matrix(5, 5, rng);
    CHECK(tc::recall_at_k(sim, 5, tc::Direction::ImageToText) == 1.0);
    CHECK(tc::recall_at_k(sim, 5, tc::Direction::TextToImage) == 1.0);
    CHECK_ERROR_CODE(tc::recall_at_k(sim, 6, tc::Direction::ImageToText), tc::ErrorCode::KExceedsCorpus);
  }

  TEST_CASE("identity pairing gives recall 1 at k 1") {
    TableModel model(8);
    tc::RetrievalSet set;
    for (int i = 0; i < 8; ++i) {
      Vector v = Vector::Zero(8);
      v[i] = 1.0;
      model.set("img" + std::to_string(i), v);
      model.set("txt" + std::to_string(i), v);
      set.images.push_back("img" + std::to_string(i));
      set.texts.push_back("txt" + std::to_string(i));
    }
    const auto r = tc::bidirectional_recall(model, set, 1);
    CHECK(r.image_to_text == 1.0);
    CHECK(r.text_to_image == 1.0);
  }

  TEST_CASE("recall matches the sorted-similarity oracle") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix sim = tc::testing::random_matrix(50, 50, rng);
      for (std::size_t k : {1, 5, 10}) {
        CHECK(tc::recall_at_k(sim, k, tc::Direction::ImageToText) == tc::testing::oracle_recall(sim, k, true));
        CHECK(tc::recall_at_k(sim, k, tc::Direction::TextToImage) == tc::testing::oracle_recall(sim, k, false));
      }
    }
    // Quantized similarities force ties.
    Matrix tied = tc::testing::random_matrix(30, 30, rng).array().round();
    for (std::size_t k : {1, 3}) {
      CHECK(tc::recall_at_k(tied, k, tc::Direction::ImageToText) == tc::testing::oracle_recall(tied, k, true));
    }
  }

  TEST_CASE("recall properties") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix sim = tc::testing::random_matrix(12, 12, rng);
      double prev = 0.0;
      for (std::size_t k = 1; k <= 12; ++k) {
        const double r = tc::recall_at_k(sim, k, tc::Direction::ImageToText);
        CHECK(r >= prev);
        prev = r;
      }
      const Matrix t = sim.transpose();
      CHECK(tc::recall_at_k(sim, 3, tc::Direction::ImageToText) == tc::recall_at_k(t, 3, tc::Direction::TextToImage));
      CHECK(tc::recall_at_k(sim, 3, tc::Direction::TextToImage) == tc::recall_at_k(t, 3, tc::Direction::ImageToText));
      const Matrix scaled = sim * 7.5;
      CHECK(tc::recall_at_k(scaled, 2, tc::Direction::ImageToText) == tc::recall_at_k(sim, 2, tc::Direction::ImageToText));
    }
  }

  TEST_CASE("scaling similarities keeps the chosen option") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> s(5);
      for (auto& x : s) x = std::normal_distribution<double>()(rng);
      std::vector<double> scaled = s;
      for (auto& x : scaled) x *= 3.25;
      CHECK(tc::argmax_lowest(s) == tc::argmax_lowest(scaled));
    }
  }

  TEST_CASE("statement templates") {
    CHECK(tc::fill_template(tc::kGroundingTemplate, {{"concept", "Mantou"}, {"country", "China"}}) ==
          "The item in the picture is Mantou in China.");
    CHECK(tc::fill_template("{a} {b}", {{"a", "x"}}) == "x {b}");
  }

  TEST_CASE("item builders") {
    const auto cards = country_cards();
    const auto ranking = tc::concept_ranking_items(cards);
    REQUIRE(ranking.size() == 12);
    CHECK(ranking[0].options == std::vector<std::string>{"pos0", "neg0"});
    CHECK(ranking[0].correct_index == 0);
    CHECK(ranking[1].correct_index == 1);

    const auto grounding = tc::grounding_items(cards, 1);
    CHECK_FALSE(grounding.empty());
    for (const auto& item : grounding) {
      CHECK(item.options.size() == 4);
      CHECK_NOTHROW(tc::validate(item));
    }

    const std::vector<std::string> countries{"China", "Japan", "Korea", "India", "Mexico"};
    const auto by_country = tc::country_items(cards, countries, 2);
    REQUIRE(by_country.size() == 12);
    for (const auto& item : by_country) {
      CHECK(std::set<std::string>(item.options.begin(), item.options.end()).size() == 4);
    }
    CHECK(tc::country_items(cards, countries, 2)[3].options == by_country[3].options);

    const auto two = tc::two_choice_items(cards);
    CHECK(two[0].options[0] == "There is pos0 in the image");
    const auto set = tc::caption_retrieval_set(cards);
    CHECK(set.images.size() == 12);
  }

  TEST_CASE("files round trip and suites run deterministically") {
    TempDir dir("suite");
    const auto cards = country_cards();
    const auto items = tc::concept_ranking_items(cards);
    tc::save_ranking_items(dir / "rank.jsonl", items);
    const auto back = tc::load_ranking_items(dir / "rank.jsonl");
    REQUIRE(back.size() == items.size());
    CHECK(back[3].options == items[3].options);
    tc::save_retrieval_set(dir / "ret.jsonl", tc::caption_retrieval_set(cards));

    const auto suite = tc::parse_suite_config(
        nlohmann::json::parse(R"({"ranking":[{"name":"twins","path":"rank.jsonl"}],
                                 "retrieval":[{"name":"captions","path":"ret.jsonl","k":3}]})"),
        dir.path());
    TableModel model(16, 9);
    const auto report = tc::eval_report(model, suite, "ckpt");
    CHECK(report.ranking.count("twins") == 1);
    CHECK(report.retrieval.count("captions") == 1);
    CHECK(report.retrieval.at("captions").k == 3);
    CHECK(tc::to_json(report) == tc::to_json(tc::eval_report(model, suite, "ckpt")));
    CHECK_ERROR_CODE(tc::parse_suite_config(nlohmann::json{{"rankings", nlohmann::json::array()}}),
                     tc::ErrorCode::ConfigError);
  }

  TEST_CASE("encoder model rejects zero-feature items") {
    tc::EmbeddingCache cache(32);
    cache.insert("blank", Eigen::VectorXd::Zero(32));
    tc::FeatureResolver features(32, &cache);
    tc::EncoderModel model(tc::init_model({8, 32, 4, 0.0}, 1), features);
    CHECK_ERROR_CODE(model.embed_image("cache:blank"), tc::ErrorCode::DegenerateItem);
    CHECK(std::abs(model.embed_text("pagoda").norm() - 1.0) < 1e-9);
  }
}
