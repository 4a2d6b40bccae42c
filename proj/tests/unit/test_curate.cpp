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


#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "support/checks.hpp"
#include "twinclip/backend.hpp"
#include "twinclip/curate.hpp"
#include "twinclip/templates.hpp"

namespace tc = twinclip;
using tc::testing::TempDir;

namespace {

// Answers every text request of a template id with a fixed reply.
class ScriptedBackend final : public tc::Backend {
 public:
  std::map<std::string, std::string> replies;
  std::vector<tc::BackendRequest> requests;

  tc::BackendResponse generate_text(const tc::BackendRequest& request) override {
    requests.push_back(request);
    return {replies.at(request.template_id)};
  }
  tc::GeneratedImage generate_image(std::string_view caption) override {
    return {"cache:" + std::string(caption), std::nullopt};
  }
};

tc::ConceptRecord erhu() {
  return {"Erhu", "China", tc::Category::Art, "Two-stringed bowed instrument.",
          "Small hexagonal sound box, long thin neck, two strings"};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

tc::PipelineConfig fixture_config() {
  tc::PipelineConfig cfg;
  cfg.corpus = std::filesystem::path(TWINCLIP_TEST_DATA) / "raw_candidates.jsonl";
  cfg.captions_per_concept = 3;
  cfg.mock_judge = tc::JudgeMode::Hashed;
  cfg.seed = 5;
  cfg.feature_dim = 64;
  return cfg;
}

tc::PipelineResult run_fixture(const tc::PipelineConfig& cfg) {
  tc::MockBackend backend({cfg.seed, cfg.feature_dim, cfg.mock_judge});
  const auto candidates = tc::load_candidates(cfg.corpus);
  return tc::run_pipeline(cfg, backend, candidates);
}

std::string cards_text(const tc::PipelineResult& r) {
  std::string out;
  for (const auto& card : r.cards) out += tc::serialize_twin_card(card) + "\n";
  return out;
}

}  // namespace

TEST_SUITE("curate") {
  TEST_CASE("bottom-up filter keeps only an unambiguous B") {
    const tc::TemplateSet templates;
    ScriptedBackend judge;
    const tc::RawCandidate candidate{"Mantou", "A steamed bun.", "", ""};
    judge.replies["bottom_up_filter"] = "A";
    CHECK(tc::bottom_up_filter(candidate, judge, templates).decision == tc::FilterDecision::Discard);
    judge.replies["bottom_up_filter"] = "B";
    CHECK(tc::bottom_up_filter(candidate, judge, templates).decision == tc::FilterDecision::Keep);
    judge.replies["bottom_up_filter"] = "{\"concept_type\": \"B\"}";
    CHECK(tc::bottom_up_filter(candidate, judge, templates).decision == tc::FilterDecision::Keep);
    judge.replies["bottom_up_filter"] = "maybe";
    const auto unsure = tc::bottom_up_filter(candidate, judge, templates);
    CHECK(unsure.decision == tc::FilterDecision::Discard);
    CHECK(unsure.unparseable);
    CHECK(judge.requests.back().prompt.find("Mantou") != std::string::npos);
  }

  TEST_CASE("mock bottom-up filter separates cultural candidates") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    CHECK(tc::bottom_up_filter({"Erhu", "A Chinese bowed string instrument.", "", ""}, mock, templates).decision ==
          tc::FilterDecision::Keep);
    CHECK(tc::bottom_up_filter({"List of rivers", "An index.", "", ""}, mock, templates).decision ==
          tc::FilterDecision::Discard);
  }

  TEST_CASE("top-down generation") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    const auto record = tc::top_down_generate("China", "Cuisine", mock, templates);
    CHECK(record.name == "Mantou");
    CHECK(record.country == "China");
    CHECK(record.category == tc::Category::Cuisine);
    CHECK(record.context.find("teamed") != std::string::npos);
    CHECK_FALSE(record.visual_features.empty());

    ScriptedBackend scripted;
    scripted.replies["top_down_generate"] = "Concept: Mantou\nContext: A steamed bun.\n";
    CHECK_ERROR_CODE(tc::top_down_generate("China", tc::Category::Cuisine, scripted, templates),
                     tc::ErrorCode::ParseFailure);
    CHECK_ERROR_CODE(tc::top_down_generate("China", "Music", scripted, templates), tc::ErrorCode::InvalidArgument);
    CHECK(scripted.requests.size() == 1);
  }

  TEST_CASE("twin matching") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    const auto twin = tc::twin_match(erhu(), mock, templates);
    CHECK(twin.name == "Guzheng");
    CHECK(twin.category == tc::Category::Art);

    ScriptedBackend scripted;
    scripted.replies["twin_match"] =
        "New Concept: erhu\nNew Context: Same instrument.\nNew Key Visual Features: two strings\n";
    CHECK_ERROR_CODE(tc::twin_match(erhu(), scripted, templates), tc::ErrorCode::InvalidTwin);
    scripted.replies["twin_match"] =
        "New Concept: Mooncake\nNew Category: Cuisine\nNew Context: Pastry.\nNew Key Visual Features: round\n";
    CHECK_ERROR_CODE(tc::twin_match(erhu(), scripted, templates), tc::ErrorCode::InvalidTwin);
    scripted.replies["twin_match"] =
        "New Concept: Haegeum\nNew Country: Korea\nNew Context: Korean fiddle.\nNew Key Visual Features: two silk strings\n";
    const auto korean = tc::twin_match(erhu(), scripted, templates);
    CHECK(korean.country == "Korea");
    CHECK(korean.category == tc::Category::Art);
  }

  TEST_CASE("caption generation") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    const auto ten = tc::generate_captions(erhu(), 10, mock, templates);
    CHECK(ten.captions.size() == 10);
    CHECK(std::set<std::string>(ten.captions.begin(), ten.captions.end()).size() == 10);
    CHECK(ten.duplicates == 0);

    ScriptedBackend scripted;
    std::ostringstream reply;
    reply << "Here are the captions:\n";
    for (int i = 1; i <= 10; ++i) reply << i << ". caption number " << (i <= 8 ? i : i - 8) << "\n";
    scripted.replies["caption_generate"] = reply.str();
    const auto deduped = tc::generate_captions(erhu(), 10, scripted, templates);
    CHECK(deduped.captions.size() == 8);
    CHECK(deduped.duplicates == 2);
    CHECK(scripted.requests.back().prompt.find("10") != std::string::npos);

    scripted.replies["caption_generate"] = "1. only one\n";
    CHECK_ERROR_CODE(tc::generate_captions(erhu(), 10, scripted, templates), tc::ErrorCode::ParseFailure);
  }

  TEST_CASE("xiaolongbao captions carry the bamboo cue") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    const tc::ConceptRecord xlb{"Xiaolongbao", "China", tc::Category::Cuisine,
                                "Soup dumplings from Shanghai.",
                                "Delicate, thin wrappers and steamed in bamboo baskets"};
    const auto set = tc::generate_captions(xlb, 10, mock, templates);
    REQUIRE(set.captions.size() == 10);
    for (const auto& c : set.captions) CHECK(c.find("bamboo") != std::string::npos);
  }

  TEST_CASE("mock image refs are content addressed") {
    tc::MockBackend mock({1, 64, tc::JudgeMode::Constant});
    const auto a = tc::synthesize_image("An erhu on a stage.", mock);
    const auto b = tc::synthesize_image("An erhu on a stage.", mock);
    const auto c = tc::synthesize_image("A guzheng in a garden.", mock);
    CHECK(a.ref == b.ref);
    CHECK(a.ref != c.ref);
    REQUIRE(a.features.has_value());
    CHECK(*a.features == *b.features);
    CHECK(a.features->size() == 64);
    CHECK_ERROR_CODE(tc::synthesize_image("  ", mock), tc::ErrorCode::InvalidArgument);
  }

  TEST_CASE("unreachable HTTP image backend") {
    tc::HttpOptions opts;
    opts.url = "http://127.0.0.1:9/generate";
    opts.backoff = std::chrono::milliseconds(1);
    opts.timeout = std::chrono::seconds(2);
    tc::HttpBackend http(opts);
    CHECK_ERROR_CODE(tc::synthesize_image("An erhu on a stage.", http), tc::ErrorCode::BackendUnavailable);
  }

  TEST_CASE("judging") {
    const tc::TemplateSet templates;
    tc::MockBackend mock;
    const auto img = tc::synthesize_image("An erhu resting on a wooden chair.", mock);
    CHECK(tc::judge_image(img.ref, erhu(), mock, templates) == tc::JudgeScores{4, 4, 4});
    const auto odd = tc::synthesize_image("A musician with three hands playing the erhu.", mock);
    CHECK(tc::judge_image(odd.ref, erhu(), mock, templates).authenticity == 1);

    ScriptedBackend scripted;
    scripted.replies = {{"judge_authenticity", "6"}, {"judge_consistency", "4"}, {"judge_fidelity", "4"}};
    CHECK_ERROR_CODE(tc::judge_image("cache:x", erhu(), scripted, templates), tc::ErrorCode::ScoreParseFailure);
    scripted.replies["judge_authenticity"] = "Score: 5";
    CHECK(tc::judge_image("cache:x", erhu(), scripted, templates) == tc::JudgeScores{5, 4, 4});
    CHECK(scripted.requests.back().image_ref == "cache:x");
  }

  TEST_CASE("score parsing") {
    CHECK(tc::parse_score("4") == 4);
    CHECK(tc::parse_score(" Output: 3.") == 3);
    CHECK(tc::parse_score("I would give it 2 out of 5") == 2);
    CHECK_ERROR_CODE(tc::parse_score("6"), tc::ErrorCode::ScoreParseFailure);
    CHECK_ERROR_CODE(tc::parse_score("0"), tc::ErrorCode::ScoreParseFailure);
    CHECK_ERROR_CODE(tc::parse_score("4.5"), tc::ErrorCode::ScoreParseFailure);
    CHECK_ERROR_CODE(tc::parse_score("no idea"), tc::ErrorCode::ScoreParseFailure);
    CHECK_ERROR_CODE(tc::parse_score("12"), tc::ErrorCode::ScoreParseFailure);
  }

  TEST_CASE("quality filter boundaries") {
    CHECK(tc::quality_filter({1, 5, 5}) == tc::QualityDecision::Reject);
    CHECK(tc::quality_filter({3, 3, 3}) == tc::QualityDecision::Pass);
    CHECK(tc::quality_filter({2, 3, 3}) == tc::QualityDecision::Reject);
    // Mean exactly 3 with no 1s passes, whatever the spread.
    CHECK(tc::quality_filter({2, 2, 5}) == tc::QualityDecision::Pass);
    CHECK(tc::quality_filter({2, 2, 4}) == tc::QualityDecision::Reject);
    CHECK_ERROR_CODE(tc::quality_filter({0, 3, 3}), tc::ErrorCode::InvariantViolation);
  }

  TEST_CASE("quality filter over every score triple") {
    auto rule = [](int a, int c, int f) {
      const bool any_one = a == 1 || c == 1 || f == 1;
      const double mean = (a + c + f) / 3.0;
      return !any_one && !(mean < 3.0 - 1e-12);
    };
    std::size_t passes = 0;
    for (int a = 1; a <= 5; ++a) {
      for (int c = 1; c <= 5; ++c) {
        for (int f = 1; f <= 5; ++f) {
          const bool pass = tc::quality_filter({a, c, f}) == tc::QualityDecision::Pass;
          CHECK(pass == rule(a, c, f));
          passes += pass ? 1 : 0;
          if (!pass) continue;
          if (a < 5) CHECK(tc::quality_filter({a + 1, c, f}) == tc::QualityDecision::Pass);
          if (c < 5) CHECK(tc::quality_filter({a, c + 1, f}) == tc::QualityDecision::Pass);
          if (f < 5) CHECK(tc::quality_filter({a, c, f + 1}) == tc::QualityDecision::Pass);
        }
      }
    }
    CHECK(passes > 0);
  }

  TEST_CASE("summary arithmetic") {
    tc::CategorySummary s;
    s.evaluated = 32046;
    s.retained = 24824;
    CHECK(100.0 * s.pass_rate() == doctest::Approx(77.46).epsilon(0.01 / 77.46));
    tc::FilterSummary summary;
    summary.per_category[tc::Category::Art] = s;
    summary.per_category[tc::Category::Cuisine] = {10, 8, 6, {}};
    CHECK(summary.evaluated() == 32056);
    CHECK(summary.retained() == 24830);
    CHECK(summary.pass_rate() == doctest::Approx(24830.0 / 32056.0));
    CHECK(tc::CategorySummary{}.pass_rate() == 0.0);
  }

  TEST_CASE("pipeline output matches the golden files") {
    const auto cfg = fixture_config();
    const auto result = run_fixture(cfg);
    const std::string cards = cards_text(result);
    const std::string summary = tc::to_json(result.summary).dump(2) + "\n";
    const auto golden = std::filesystem::path(TWINCLIP_TEST_DATA) / "golden";
    if (std::getenv("TWINCLIP_UPDATE_GOLDEN") != nullptr) {
      std::filesystem::create_directories(golden);
      tc::atomic_write(golden / "pipeline_cards.jsonl", cards);
      tc::atomic_write(golden / "pipeline_summary.json", summary);
    }
    CHECK(result.cards.size() > 0);
    CHECK(cards == slurp(golden / "pipeline_cards.jsonl"));
    CHECK(summary == slurp(golden / "pipeline_summary.json"));
  }

  TEST_CASE("pipeline is deterministic across runs and worker counts") {
    auto cfg = fixture_config();
    const auto a = run_fixture(cfg);
    cfg.concurrency = 1;
    const auto b = run_fixture(cfg);
    CHECK(cards_text(a) == cards_text(b));
    CHECK(tc::to_json(a.summary) == tc::to_json(b.summary));
    CHECK(a.images.checksum() == b.images.checksum());
  }

  TEST_CASE("pipeline invariants") {
    auto cfg = fixture_config();
    cfg.countries = {"China", "Japan"};
    cfg.categories = {tc::Category::Cuisine, tc::Category::Art, tc::Category::Festival};
    const auto result = run_fixture(cfg);
    REQUIRE_FALSE(result.cards.empty());
    std::size_t retained = 0;
    for (const auto& [cat, s] : result.summary.per_category) {
      CHECK(s.retained <= s.passed_filter);
      CHECK(s.passed_filter <= s.evaluated);
      retained += s.retained;
    }
    CHECK(retained == 2 * result.cards.size());
    CHECK(result.summary.cards == result.cards.size());
    std::set<std::string> ids;
    for (const auto& card : result.cards) {
      CHECK_NOTHROW(tc::validate(card));
      CHECK(ids.insert(card.id).second);
      CHECK(result.images.contains(card.positive.image.substr(6)));
    }
  }

  TEST_CASE("an all-rejecting judge empties the dataset") {
    auto cfg = fixture_config();
    cfg.mock_judge = tc::JudgeMode::RejectAll;
    const auto result = run_fixture(cfg);
    CHECK(result.cards.empty());
    CHECK(result.summary.pass_rate() == 0.0);
    CHECK(result.summary.evaluated() > 0);
  }

  TEST_CASE("pipeline outputs are written") {
    TempDir dir("pipeline");
    const auto result = run_fixture(fixture_config());
    tc::write_pipeline_outputs(result, dir.path());
    CHECK(std::filesystem::exists(dir / "cards.jsonl"));
    CHECK(std::filesystem::exists(dir / "summary.json"));
    CHECK(tc::load_dataset(dir / "cards.jsonl").cards == result.cards);
    CHECK(tc::EmbeddingCache::load(dir / "images.cache").checksum() == result.images.checksum());
  }

  TEST_CASE("pipeline config JSON") {
    auto cfg = fixture_config();
    cfg.countries = {"China"};
    cfg.captions_per_category[tc::Category::Art] = 7;
    const auto back = tc::pipeline_config_from_json(tc::to_json(cfg));
    CHECK(tc::to_json(back) == tc::to_json(cfg));
    CHECK(back.captions_for(tc::Category::Art) == 7);
    CHECK(back.captions_for(tc::Category::Cuisine) == 3);
    CHECK_ERROR_CODE(tc::pipeline_config_from_json(nlohmann::json{{"captions", 3}}), tc::ErrorCode::ConfigError);
    CHECK_ERROR_CODE(tc::pipeline_config_from_json(nlohmann::json{{"categories", {"Music"}}}),
                     tc::ErrorCode::ConfigError);
    cfg.captions_per_concept = 0;
    CHECK_ERROR_CODE(cfg.validate(), tc::ErrorCode::ConfigError);
  }

  TEST_CASE("candidate corpus loading") {
    const auto candidates =
        tc::load_candidates(std::filesystem::path(TWINCLIP_TEST_DATA) / "raw_candidates.jsonl");
    CHECK(candidates.size() == 20);
    TempDir dir("candidates");
    std::ofstream(dir / "bad.jsonl") << "{\"title\": \"x\"}\n";
    CHECK_ERROR_CODE(tc::load_candidates(dir / "bad.jsonl"), tc::ErrorCode::MissingField);
  }
}
