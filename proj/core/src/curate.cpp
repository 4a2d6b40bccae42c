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


#include "twinclip/curate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "twinclip/error.hpp"

namespace twinclip {

namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    lines.push_back(std::string(text.substr(start, end == std::string_view::npos ? end : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return lines;
}

/// `Key: value` lines, keys lowercased. Leading list markers are ignored and
/// the first occurrence of a key wins.
std::map<std::string, std::string> parse_fields(std::string_view text) {
  std::map<std::string, std::string> fields;
  for (const std::string& raw : split_lines(text)) {
    std::string_view line = raw;
    while (!line.empty() && (std::isspace(static_cast<unsigned char>(line.front())) ||
                             line.front() == '-' || line.front() == '*')) {
      line.remove_prefix(1);
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    std::string key = lower(trim(line.substr(0, colon)));
    std::string value = trim(line.substr(colon + 1));
    if (key.empty() || value.empty()) continue;
    fields.emplace(std::move(key), std::move(value));
  }
  return fields;
}

std::optional<std::string> pick(const std::map<std::string, std::string>& fields,
                                std::initializer_list<std::string_view> keys) {
  for (auto key : keys) {
    auto it = fields.find(std::string(key));
    if (it != fields.end()) return it->second;
  }
  return std::nullopt;
}

std::string need(const std::map<std::string, std::string>& fields,
                 std::initializer_list<std::string_view> keys, std::string_view stage) {
  auto value = pick(fields, keys);
  if (!value) {
    fail(ErrorCode::ParseFailure,
         std::string(stage) + ": reply has no '" + std::string(*keys.begin()) + "' field");
  }
  return *value;
}

std::string call(Backend& backend, const TemplateSet& templates, std::string_view id,
                 std::map<std::string, std::string> fields, std::string image_ref = {}) {
  BackendRequest request;
  request.template_id = std::string(id);
  request.prompt = templates.render(id, fields);
  request.fields = std::move(fields);
  request.image_ref = std::move(image_ref);
  return backend.generate_text(request).text;
}

bool standalone_letter(std::string_view text, std::size_t i) {
  auto alnum = [&](std::size_t k) { return std::isalnum(static_cast<unsigned char>(text[k])) != 0; };
  return (i == 0 || !alnum(i - 1)) && (i + 1 >= text.size() || !alnum(i + 1));
}

std::optional<char> parse_choice(std::string_view reply) {
  std::string_view rest = reply;
  if (const auto key = reply.find("concept_type"); key != std::string_view::npos) {
    rest = reply.substr(key + std::string_view("concept_type").size());
  } else {
    std::string t = trim(reply);
    while (!t.empty() && (t.back() == '.' || t.back() == '"' || t.back() == '\'')) t.pop_back();
    while (!t.empty() && (t.front() == '"' || t.front() == '\'')) t.erase(t.begin());
    if (t == "A" || t == "B") return t[0];
    return std::nullopt;
  }
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if ((rest[i] == 'A' || rest[i] == 'B') && standalone_letter(rest, i)) return rest[i];
  }
  return std::nullopt;
}

std::string strip_list_marker(std::string_view line, bool& numbered) {
  std::string t = trim(line);
  std::size_t i = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
  if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
    numbered = true;
    return trim(std::string_view(t).substr(i + 1));
  }
  numbered = false;
  if (!t.empty() && (t[0] == '-' || t[0] == '*')) return trim(std::string_view(t).substr(1));
  return t;
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "x" : out;
}

/// Runs fn(i) for i in [0, n) on at most `workers` threads. fn must not throw.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Per-item bookkeeping merged in index order so totals are deterministic.
struct Tally {
  std::map<std::string, std::size_t> skipped;
  std::vector<std::string> warnings;
  std::size_t backend_failures = 0;

  void skip(const std::string& reason) { ++skipped[reason]; }
  void merge_into(PipelineResult& result) const {
    for (const auto& [k, v] : skipped) result.summary.skipped[k] += v;
    result.warnings.insert(result.warnings.end(), warnings.begin(), warnings.end());
    result.backend_failures += backend_failures;
  }
};

/// Calls fn, retrying once when it raises one of `retryable`.
template <typename Fn>
auto with_one_retry(Fn&& fn, std::initializer_list<ErrorCode> retryable) {
  try {
    return fn();
  } catch (const Error& e) {
    if (std::find(retryable.begin(), retryable.end(), e.code()) == retryable.end()) throw;
  }
  return fn();
}

std::string reason_for(ErrorCode code, std::string_view stage) {
  switch (code) {
    case ErrorCode::BackendUnavailable: return "backend_unavailable";
    case ErrorCode::InvalidTwin: return "invalid_twin";
    case ErrorCode::GenerationRejected: return "generation_rejected";
    case ErrorCode::ScoreParseFailure: return "score_parse_failure";
    default: return std::string(stage) + "_failure";
  }
}

void record_failure(Tally& tally, const Error& e, std::string_view stage, std::string_view item) {
  tally.skip(reason_for(e.code(), stage));
  if (e.code() == ErrorCode::BackendUnavailable) ++tally.backend_failures;
  tally.warnings.push_back(std::string(stage) + " '" + std::string(item) + "': " + e.what());
}

struct JudgedImage {
  Category category;
  JudgeScores scores;
  bool passed = false;
};

struct PairOutcome {
  Tally tally;
  std::vector<TwinCard> cards;
  std::vector<JudgedImage> judged;
  std::vector<std::pair<std::string, Eigen::VectorXd>> features;
};

ScoreStats stats_of(const std::vector<int>& values) {
  ScoreStats s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (int v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (int v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

template <typename T>
T get_as(const json& j, std::string_view key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::ConfigError, "curate." + std::string(key) + ": wrong type");
  }
}

Category category_or_fail(const std::string& label, std::string_view where) {
  auto c = parse_category(label);
  require(c.has_value(), ErrorCode::ConfigError,
          std::string(where) + ": unknown category '" + label + "'");
  return *c;
}

}  // namespace

std::vector<RawCandidate> load_candidates(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<RawCandidate> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    const json j = json::parse(line, nullptr, false);
    require(!j.is_discarded() && j.is_object(), ErrorCode::MalformedJson, where + ": not a JSON object");
    auto str = [&](const char* key, bool required) {
      if (!j.contains(key)) {
        require(!required, ErrorCode::MissingField, where + ": missing '" + key + "'");
        return std::string();
      }
      require(j[key].is_string(), ErrorCode::MalformedJson, where + ": '" + key + "' is not a string");
      return j[key].get<std::string>();
    };
    RawCandidate c{str("title", true), str("definition", true), str("caption", false),
                   str("image_url", false)};
    require(!trim(c.title).empty() && !trim(c.definition).empty(), ErrorCode::InvariantViolation,
            where + ": title and definition must be non-empty");
    out.push_back(std::move(c));
  }
  return out;
}

BottomUpResult bottom_up_filter(const RawCandidate& candidate, Backend& judge,
                                const TemplateSet& templates) {
  require(!trim(candidate.title).empty() && !trim(candidate.definition).empty(),
          ErrorCode::InvalidArgument, "candidate needs a title and a definition");
  const std::string reply =
      call(judge, templates, kTemplateBottomUpFilter, {{"title", candidate.title}});
  const auto choice = parse_choice(reply);
  if (!choice) return {FilterDecision::Discard, true};
  return {*choice == 'B' ? FilterDecision::Keep : FilterDecision::Discard, false};
}

ConceptRecord bottom_up_classify(const RawCandidate& candidate, Backend& generator,
                                 const TemplateSet& templates) {
  const std::string reply = call(generator, templates, kTemplateBottomUpClassify,
                                 {{"concept", candidate.title},
                                  {"definition", candidate.definition},
                                  {"caption", candidate.caption},
                                  {"image_url", candidate.image_url}});
  const auto fields = parse_fields(reply);
  ConceptRecord record;
  record.name = trim(candidate.title);
  record.country = need(fields, {"country"}, "classify");
  const std::string label = need(fields, {"category", "cultural category"}, "classify");
  const auto category = parse_category(label);
  require(category.has_value(), ErrorCode::ParseFailure,
          "classify: category '" + label + "' is outside the taxonomy");
  record.category = *category;
  record.context = need(fields, {"context"}, "classify");
  record.visual_features = need(fields, {"key visual features", "visual features"}, "classify");
  validate(record);
  return record;
}

ConceptRecord top_down_generate(std::string_view country, Category category, Backend& generator,
                                const TemplateSet& templates) {
  require(!trim(country).empty(), ErrorCode::InvalidArgument, "country must be non-empty");
  const std::string reply =
      call(generator, templates, kTemplateTopDown,
           {{"country", std::string(country)}, {"category", std::string(category_name(category))}});
  const auto fields = parse_fields(reply);
  ConceptRecord record;
  record.name = need(fields, {"concept"}, "top-down");
  record.country = std::string(country);
  record.category = category;
  record.context = need(fields, {"context"}, "top-down");
  record.visual_features = need(fields, {"key visual features", "visual features"}, "top-down");
  validate(record);
  return record;
}

ConceptRecord top_down_generate(std::string_view country, std::string_view category,
                                Backend& generator, const TemplateSet& templates) {
  const auto c = parse_category(category);
  require(c.has_value(), ErrorCode::InvalidArgument,
          "category '" + std::string(category) + "' is not in the taxonomy");
  return top_down_generate(country, *c, generator, templates);
}

ConceptRecord twin_match(const ConceptRecord& record, Backend& generator,
                         const TemplateSet& templates) {
  validate(record);
  const std::string reply = call(generator, templates, kTemplateTwinMatch,
                                 {{"category", std::string(category_name(record.category))},
                                  {"concept", record.name},
                                  {"context", record.context},
                                  {"visual_features", record.visual_features}});
  const auto fields = parse_fields(reply);
  ConceptRecord twin;
  twin.name = need(fields, {"new concept"}, "twin");
  twin.context = need(fields, {"new context"}, "twin");
  twin.visual_features =
      need(fields, {"new key visual features", "new visual features"}, "twin");
  twin.country = pick(fields, {"new country"}).value_or(record.country);
  twin.category = record.category;
  if (auto label = pick(fields, {"new category", "category"})) {
    const auto c = parse_category(*label);
    require(c == record.category, ErrorCode::InvalidTwin,
            "twin of '" + record.name + "' has category '" + *label + "'");
  }
  require(lower(twin.name) != lower(record.name), ErrorCode::InvalidTwin,
          "twin of '" + record.name + "' repeats the concept name");
  validate(twin);
  return twin;
}

CaptionSet generate_captions(const ConceptRecord& record, std::size_t k, Backend& generator,
                             const TemplateSet& templates) {
  require(k >= 1, ErrorCode::InvalidArgument, "k must be at least 1");
  const std::string reply = call(generator, templates, kTemplateCaptions,
                                 {{"concept", record.name},
                                  {"context", record.context},
                                  {"visual_features", record.visual_features},
                                  {"k", std::to_string(k)}});
  std::vector<std::string> numbered_lines;
  std::vector<std::string> plain_lines;
  for (const std::string& line : split_lines(reply)) {
    bool numbered = false;
    std::string text = strip_list_marker(line, numbered);
    if (text.empty()) continue;
    (numbered ? numbered_lines : plain_lines).push_back(std::move(text));
  }
  // A numbered list wins over any preamble or sign-off around it.
  const auto& lines = numbered_lines.empty() ? plain_lines : numbered_lines;
  CaptionSet set;
  std::set<std::string> seen;
  for (const std::string& text : lines) {
    if (set.captions.size() == k) break;
    if (!seen.insert(text).second) {
      ++set.duplicates;
      continue;
    }
    set.captions.push_back(text);
  }
  require(set.captions.size() >= (k + 1) / 2, ErrorCode::ParseFailure,
          "captions for '" + record.name + "': " + std::to_string(set.captions.size()) +
              " usable of " + std::to_string(k) + " requested");
  return set;
}

GeneratedImage synthesize_image(std::string_view caption, Backend& image_backend) {
  require(!trim(caption).empty(), ErrorCode::InvalidArgument, "caption must be non-empty");
  GeneratedImage image = image_backend.generate_image(caption);
  require(!image.ref.empty(), ErrorCode::GenerationRejected, "backend returned an empty image ref");
  return image;
}

void validate(const JudgeScores& s) {
  for (int v : {s.authenticity, s.consistency, s.fidelity}) {
    require(v >= 1 && v <= 5, ErrorCode::InvariantViolation,
            "judge score " + std::to_string(v) + " outside 1..5");
  }
}

int parse_score(std::string_view reply) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!is_digit(reply[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && is_digit(reply[j])) ++j;
    const bool clean_left = i == 0 || (!is_word(reply[i - 1]) && reply[i - 1] != '.');
    const bool decimal = j + 1 < reply.size() && reply[j] == '.' && is_digit(reply[j + 1]);
    const bool clean_right = j == reply.size() || (!is_word(reply[j]) && !decimal);
    if (clean_left && clean_right) {
      const std::string digits(reply.substr(i, j - i));
      require(digits.size() == 1 && digits[0] >= '1' && digits[0] <= '5',
              ErrorCode::ScoreParseFailure, "score '" + digits + "' outside 1..5");
      return digits[0] - '0';
    }
    i = j;
  }
  fail(ErrorCode::ScoreParseFailure, "no integer score in reply: '" + trim(reply) + "'");
}

JudgeScores judge_image(std::string_view image_ref, const ConceptRecord& record, Backend& judge,
                        const TemplateSet& templates) {
  require(!image_ref.empty(), ErrorCode::InvalidArgument, "image ref must be non-empty");
  const std::map<std::string, std::string> base = {{"concept", record.name},
                                                   {"context", record.context}};
  auto fidelity_fields = base;
  fidelity_fields["image"] = std::string(image_ref);
  JudgeScores s;
  s.authenticity = parse_score(
      call(judge, templates, kTemplateJudgeAuthenticity, base, std::string(image_ref)));
  s.consistency = parse_score(
      call(judge, templates, kTemplateJudgeConsistency, base, std::string(image_ref)));
  s.fidelity = parse_score(
      call(judge, templates, kTemplateJudgeFidelity, fidelity_fields, std::string(image_ref)));
  return s;
}

QualityDecision quality_filter(const JudgeScores& scores) {
  validate(scores);
  const bool any_one = scores.authenticity == 1 || scores.consistency == 1 || scores.fidelity == 1;
  // Integer form of mean < 3, free of rounding.
  const bool low_mean = scores.authenticity + scores.consistency + scores.fidelity < 9;
  return any_one || low_mean ? QualityDecision::Reject : QualityDecision::Pass;
}

std::size_t FilterSummary::evaluated() const noexcept {
  std::size_t n = 0;
  for (const auto& [c, s] : per_category) n += s.evaluated;
  return n;
}

std::size_t FilterSummary::retained() const noexcept {
  std::size_t n = 0;
  for (const auto& [c, s] : per_category) n += s.retained;
  return n;
}

double FilterSummary::pass_rate() const noexcept {
  const std::size_t e = evaluated();
  return e == 0 ? 0.0 : static_cast<double>(retained()) / static_cast<double>(e);
}

json to_json(const FilterSummary& summary) {
  json categories = json::object();
  static constexpr std::array<const char*, 3> kDims = {"authenticity", "consistency", "fidelity"};
  for (const auto& [c, s] : summary.per_category) {
    json scores = json::object();
    for (std::size_t d = 0; d < kDims.size(); ++d) {
      scores[kDims[d]] = {{"mean", s.scores[d].mean}, {"std", s.scores[d].stddev}};
    }
    categories[std::string(category_name(c))] = {{"evaluated", s.evaluated},
                                                  {"passed_filter", s.passed_filter},
                                                  {"retained", s.retained},
                                                  {"pass_rate", s.pass_rate()},
                                                  {"scores", scores}};
  }
  return {{"cards", summary.cards},
          {"evaluated", summary.evaluated()},
          {"retained", summary.retained()},
          {"pass_rate", summary.pass_rate()},
          {"per_category", categories},
          {"skipped", summary.skipped}};
}

void PipelineConfig::validate() const {
  require(captions_per_concept >= 1, ErrorCode::ConfigError, "captions_per_concept must be >= 1");
  for (const auto& [c, k] : captions_per_category) {
    require(k >= 1, ErrorCode::ConfigError,
            "captions_per_category." + std::string(category_name(c)) + " must be >= 1");
  }
  require(concurrency >= 1, ErrorCode::ConfigError, "concurrency must be >= 1");
  require(retry.attempts >= 1, ErrorCode::ConfigError, "retry.attempts must be >= 1");
  require(feature_dim >= kMinTextFeatureDim, ErrorCode::ConfigError,
          "feature_dim must be >= " + std::to_string(kMinTextFeatureDim));
  require(!corpus.empty() || (!countries.empty() && !categories.empty()), ErrorCode::ConfigError,
          "no concept source: set corpus or countries");
}

std::size_t PipelineConfig::captions_for(Category c) const {
  auto it = captions_per_category.find(c);
  return it == captions_per_category.end() ? captions_per_concept : it->second;
}

json to_json(const PipelineConfig& cfg) {
  json categories = json::array();
  for (Category c : cfg.categories) categories.push_back(category_name(c));
  json per_category = json::object();
  for (const auto& [c, k] : cfg.captions_per_category) per_category[std::string(category_name(c))] = k;
  return {{"countries", cfg.countries},
          {"categories", categories},
          {"corpus", cfg.corpus.string()},
          {"captions_per_concept", cfg.captions_per_concept},
          {"captions_per_category", per_category},
          {"concurrency", cfg.concurrency},
          {"retry",
           {{"attempts", cfg.retry.attempts},
            {"backoff_ms", cfg.retry.backoff.count()},
            {"timeout_s", cfg.retry.timeout.count()}}},
          {"backend", cfg.backend == BackendKind::Mock ? "mock" : "http"},
          {"endpoint", cfg.endpoint},
          {"seed", cfg.seed},
          {"feature_dim", cfg.feature_dim},
          {"mock_judge", to_string(cfg.mock_judge)},
          {"template_dir", cfg.template_dir.string()}};
}

PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  require(j.is_object(), ErrorCode::ConfigError, "curate config must be an object");
  PipelineConfig cfg;
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "countries") {
      cfg.countries = get_as<std::vector<std::string>>(value, key);
    } else if (key == "categories") {
      cfg.categories.clear();
      for (const auto& label : get_as<std::vector<std::string>>(value, key)) {
        cfg.categories.push_back(category_or_fail(label, "curate.categories"));
      }
    } else if (key == "corpus") {
      cfg.corpus = resolve(get_as<std::string>(value, key));
    } else if (key == "captions_per_concept") {
      cfg.captions_per_concept = get_as<std::size_t>(value, key);
    } else if (key == "captions_per_category") {
      for (const auto& [label, k] : get_as<std::map<std::string, std::size_t>>(value, key)) {
        cfg.captions_per_category[category_or_fail(label, "curate.captions_per_category")] = k;
      }
    } else if (key == "concurrency") {
      cfg.concurrency = get_as<std::size_t>(value, key);
    } else if (key == "retry") {
      require(value.is_object(), ErrorCode::ConfigError, "curate.retry must be an object");
      for (const auto& [rk, rv] : value.items()) {
        if (rk == "attempts") {
          cfg.retry.attempts = get_as<std::size_t>(rv, "retry.attempts");
        } else if (rk == "backoff_ms") {
          cfg.retry.backoff = std::chrono::milliseconds(get_as<std::int64_t>(rv, "retry.backoff_ms"));
        } else if (rk == "timeout_s") {
          cfg.retry.timeout = std::chrono::seconds(get_as<std::int64_t>(rv, "retry.timeout_s"));
        } else {
          fail(ErrorCode::ConfigError, "unknown key curate.retry." + rk);
        }
      }
    } else if (key == "backend") {
      const auto name = get_as<std::string>(value, key);
      require(name == "mock" || name == "http", ErrorCode::ConfigError,
              "curate.backend must be 'mock' or 'http'");
      cfg.backend = name == "mock" ? BackendKind::Mock : BackendKind::Http;
    } else if (key == "endpoint") {
      cfg.endpoint = get_as<std::string>(value, key);
    } else if (key == "seed") {
      cfg.seed = get_as<std::uint64_t>(value, key);
    } else if (key == "feature_dim") {
      cfg.feature_dim = get_as<std::size_t>(value, key);
    } else if (key == "mock_judge") {
      const auto mode = parse_judge_mode(get_as<std::string>(value, key));
      require(mode.has_value(), ErrorCode::ConfigError,
              "curate.mock_judge must be constant, hashed or reject_all");
      cfg.mock_judge = *mode;
    } else if (key == "template_dir") {
      cfg.template_dir = resolve(get_as<std::string>(value, key));
    } else {
      fail(ErrorCode::ConfigError, "unknown key curate." + key);
    }
  }
  return cfg;
}

std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg,
                                      const std::filesystem::path& image_dir) {
  if (cfg.backend == BackendKind::Mock) {
    return std::make_unique<MockBackend>(MockOptions{cfg.seed, cfg.feature_dim, cfg.mock_judge});
  }
  HttpOptions options;
  options.url = cfg.endpoint;
  options.attempts = cfg.retry.attempts;
  options.backoff = cfg.retry.backoff;
  options.timeout = cfg.retry.timeout;
  options.image_dir = image_dir;
  return std::make_unique<HttpBackend>(http_options_from_env(options));
}

PipelineResult run_pipeline(const PipelineConfig& cfg, Backend& backend,
                            std::span<const RawCandidate> candidates) {
  cfg.validate();
  const std::size_t grid = cfg.countries.size() * cfg.categories.size();
  require(!candidates.empty() || grid > 0, ErrorCode::InvalidArgument, "no concept source");
  const TemplateSet templates =
      cfg.template_dir.empty() ? TemplateSet() : TemplateSet(cfg.template_dir);
  PipelineResult result;
  result.images = EmbeddingCache(cfg.feature_dim);

  // Stage 1: concept sourcing.
  std::vector<std::optional<ConceptRecord>> sourced(candidates.size() + grid);
  std::vector<Tally> source_tally(sourced.size());
  parallel_for(sourced.size(), cfg.concurrency, [&](std::size_t i) {
    Tally& tally = source_tally[i];
    if (i < candidates.size()) {
      const RawCandidate& c = candidates[i];
      try {
        const BottomUpResult decision = bottom_up_filter(c, backend, templates);
        if (decision.unparseable) {
          tally.skip("filter_unparseable");
          tally.warnings.push_back("filter '" + c.title + "': unparseable reply, discarded");
        }
        if (decision.decision == FilterDecision::Discard) {
          tally.skip("filter_discard");
          return;
        }
        sourced[i] = with_one_retry([&] { return bottom_up_classify(c, backend, templates); },
                                    {ErrorCode::ParseFailure, ErrorCode::InvariantViolation});
      } catch (const Error& e) {
        record_failure(tally, e, "classify", c.title);
      }
      return;
    }
    const std::size_t g = i - candidates.size();
    const std::string& country = cfg.countries[g / cfg.categories.size()];
    const Category category = cfg.categories[g % cfg.categories.size()];
    try {
      sourced[i] = with_one_retry(
          [&] { return top_down_generate(country, category, backend, templates); },
          {ErrorCode::ParseFailure, ErrorCode::InvariantViolation});
    } catch (const Error& e) {
      record_failure(tally, e, "top_down", country + "/" + std::string(category_name(category)));
    }
  });
  for (const Tally& t : source_tally) t.merge_into(result);

  std::vector<ConceptRecord> concepts;
  std::set<std::string> seen_names;
  for (auto& record : sourced) {
    if (!record) continue;
    if (!seen_names.insert(slug(record->name)).second) {
      ++result.summary.skipped["duplicate_concept"];
      continue;
    }
    concepts.push_back(std::move(*record));
  }

  // Stage 2: twin matching.
  std::vector<std::optional<ConceptRecord>> twins(concepts.size());
  std::vector<Tally> twin_tally(concepts.size());
  parallel_for(concepts.size(), cfg.concurrency, [&](std::size_t i) {
    try {
      twins[i] = with_one_retry([&] { return twin_match(concepts[i], backend, templates); },
                                {ErrorCode::InvalidTwin, ErrorCode::ParseFailure,
                                 ErrorCode::InvariantViolation});
    } catch (const Error& e) {
      record_failure(twin_tally[i], e, "twin", concepts[i].name);
    }
  });
  for (const Tally& t : twin_tally) t.merge_into(result);

  std::vector<std::pair<ConceptRecord, ConceptRecord>> pairs;
  std::set<std::pair<std::string, std::string>> seen_pairs;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (!twins[i]) continue;
    std::string a = slug(concepts[i].name);
    std::string b = slug(twins[i]->name);
    if (a > b) std::swap(a, b);
    if (!seen_pairs.emplace(a, b).second) {
      ++result.summary.skipped["duplicate_pair"];
      continue;
    }
    pairs.emplace_back(concepts[i], std::move(*twins[i]));
  }

  // Stage 3: captions, images, judging.
  std::vector<PairOutcome> outcomes(pairs.size());
  parallel_for(pairs.size(), cfg.concurrency, [&](std::size_t p) {
    const auto& [pos, neg] = pairs[p];
    PairOutcome& out = outcomes[p];
    const std::size_t k = cfg.captions_for(pos.category);
    CaptionSet pos_caps;
    CaptionSet neg_caps;
    try {
      pos_caps = generate_captions(pos, k, backend, templates);
      neg_caps = generate_captions(neg, k, backend, templates);
    } catch (const Error& e) {
      record_failure(out.tally, e, "caption", pos.name + "/" + neg.name);
      return;
    }
    for (const CaptionSet* caps : {&pos_caps, &neg_caps}) {
      if (caps->duplicates > 0) {
        out.tally.skipped["duplicate_caption"] += caps->duplicates;
        out.tally.warnings.push_back("captions for '" + pos.name + "/" + neg.name + "': " +
                                     std::to_string(caps->duplicates) + " duplicate(s) collapsed");
      }
    }
    const std::size_t n = std::min(pos_caps.captions.size(), neg_caps.captions.size());
    for (std::size_t j = 0; j < n; ++j) {
      const std::string& pos_caption = pos_caps.captions[j];
      const std::string& neg_caption = neg_caps.captions[j];
      try {
        GeneratedImage pos_img = synthesize_image(pos_caption, backend);
        GeneratedImage neg_img = synthesize_image(neg_caption, backend);
        const JudgeScores pos_scores = judge_image(pos_img.ref, pos, backend, templates);
        const JudgeScores neg_scores = judge_image(neg_img.ref, neg, backend, templates);
        const bool pos_pass = quality_filter(pos_scores) == QualityDecision::Pass;
        const bool neg_pass = quality_filter(neg_scores) == QualityDecision::Pass;
        out.judged.push_back({pos.category, pos_scores, pos_pass});
        out.judged.push_back({neg.category, neg_scores, neg_pass});
        if (!(pos_pass && neg_pass)) continue;
        for (GeneratedImage* img : {&pos_img, &neg_img}) {
          if (!img->features) continue;
          std::string key = img->ref.starts_with(kCachePrefix)
                                ? img->ref.substr(kCachePrefix.size())
                                : img->ref;
          out.features.emplace_back(std::move(key), std::move(*img->features));
        }
        char suffix[24];
        std::snprintf(suffix, sizeof suffix, "-%02zu", j);
        TwinCard card;
        card.id = slug(pos.name) + "--" + slug(neg.name) + suffix;
        card.positive = {pos, pos_caption, pos_img.ref};
        card.negative = {neg, neg_caption, neg_img.ref};
        validate(card);
        out.cards.push_back(std::move(card));
      } catch (const Error& e) {
        record_failure(out.tally, e, "image", pos.name + "/" + neg.name + " #" + std::to_string(j));
        if (e.code() == ErrorCode::BackendUnavailable) return;
      }
    }
  });

  std::map<Category, std::array<std::vector<int>, 3>> retained_scores;
  for (PairOutcome& out : outcomes) {
    out.tally.merge_into(result);
    for (const JudgedImage& img : out.judged) {
      CategorySummary& s = result.summary.per_category[img.category];
      ++s.evaluated;
      if (img.passed) ++s.passed_filter;
    }
    // Judged images come in (positive, negative) order; a card exists exactly
    // when both members of a judged pair passed.
    for (std::size_t i = 0; i + 1 < out.judged.size(); i += 2) {
      if (!(out.judged[i].passed && out.judged[i + 1].passed)) continue;
      for (const JudgedImage* img : {&out.judged[i], &out.judged[i + 1]}) {
        ++result.summary.per_category[img->category].retained;
        auto& dims = retained_scores[img->category];
        dims[0].push_back(img->scores.authenticity);
        dims[1].push_back(img->scores.consistency);
        dims[2].push_back(img->scores.fidelity);
      }
    }
    for (auto& [key, values] : out.features) {
      if (!result.images.contains(key)) result.images.insert(key, std::move(values));
    }
    for (TwinCard& card : out.cards) result.cards.push_back(std::move(card));
  }
  for (const auto& [category, dims] : retained_scores) {
    for (std::size_t d = 0; d < 3; ++d) {
      result.summary.per_category[category].scores[d] = stats_of(dims[d]);
    }
  }
  std::sort(result.cards.begin(), result.cards.end(),
            [](const TwinCard& a, const TwinCard& b) { return a.id < b.id; });
  result.summary.cards = result.cards.size();
  return result;
}

void write_pipeline_outputs(const PipelineResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_dataset(out_dir / "cards.jsonl", result.cards);
  atomic_write(out_dir / "summary.json", to_json(result.summary).dump(2) + "\n");
  if (result.images.size() > 0) result.images.save(out_dir / "images.cache");
}

}  // namespace twinclip
