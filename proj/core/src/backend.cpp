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


#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "twinclip/backend.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"
#include "twinclip/templates.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

namespace {

using nlohmann::json;

struct KnownConcept {
  std::string_view name;
  std::string_view country;
  Category category;
  std::string_view context;
  std::string_view features;
  std::string_view twin;
};

// A small offline vocabulary so that mock runs produce recognisable cards.
constexpr std::array<KnownConcept, 16> kKnown = {{
    {"Mantou", "China", Category::Cuisine,
     "Steamed wheat bun eaten at family meals and during festivals.",
     "Pillowy white surface, round or rectangular shape, palm-sized", "Pandesal"},
    {"Pandesal", "Philippines", Category::Cuisine,
     "Lightly sweet bread roll eaten at breakfast across the Philippines.",
     "Golden crust dusted with breadcrumbs, oval shape, palm-sized", "Mantou"},
    {"Xiaolongbao", "China", Category::Cuisine,
     "Soup dumplings with thin wrappers filled with pork and hot broth.",
     "Delicate, thin wrappers and steamed in bamboo baskets", "Momo"},
    {"Momo", "Nepal", Category::Cuisine,
     "Himalayan dumplings filled with spiced meat or vegetables, served with chutney.",
     "Pleated crescent shape, steamed on perforated metal trays", "Xiaolongbao"},
    {"Erhu", "China", Category::Art,
     "Two-stringed bowed instrument heard in Chinese folk and classical music.",
     "Two strings, small hexagonal sound box, long wooden neck, horsehair bow", "Guzheng"},
    {"Guzheng", "China", Category::Art,
     "Plucked zither with a long wooden body played in Chinese ensembles.",
     "Large rectangular wooden body, many strings over movable bridges", "Erhu"},
    {"Kimono", "Japan", Category::Clothing,
     "Formal Japanese robe worn at ceremonies and seasonal festivals.",
     "Long wide sleeves, wrapped front, broad obi sash", "Hanbok"},
    {"Hanbok", "South Korea", Category::Clothing,
     "Korean formal dress worn on holidays and at weddings.",
     "Short jacket tied with ribbon, full high-waisted skirt, bright colors", "Kimono"},
    {"Ukiyo-e", "Japan", Category::Art,
     "Woodblock prints of everyday scenes, landscapes and theatre.",
     "Flat color blocks, bold outlines, rectangular format", "Minhwa"},
    {"Minhwa", "South Korea", Category::Art,
     "Korean folk painting with auspicious animals and everyday objects.",
     "Bright mineral colors, tigers and magpies, flattened perspective", "Ukiyo-e"},
    {"Yuelao", "China", Category::Symbol,
     "Matchmaking deity of Chinese folk belief who binds couples with red thread.",
     "Elderly man with white beard, red thread, book of marriages", "Taishang Laojun"},
    {"Taishang Laojun", "China", Category::Symbol,
     "Daoist deity revered as the deified Laozi.",
     "Elderly man with white beard, horsetail whisk, gourd of elixir", "Yuelao"},
    {"Diwali", "India", Category::Festival,
     "Hindu festival of lights celebrating the victory of light over darkness.",
     "Rows of clay oil lamps, rangoli patterns, fireworks", "Loy Krathong"},
    {"Loy Krathong", "Thailand", Category::Festival,
     "Thai festival where floating baskets are released on rivers under the full moon.",
     "Banana-leaf baskets with candles and flowers floating on water", "Diwali"},
    {"Pagoda", "China", Category::Architecture,
     "Tiered tower built at Buddhist temples to house relics.",
     "Stacked eaves, octagonal floors, upturned roof corners", "Stupa"},
    {"Stupa", "Nepal", Category::Architecture,
     "Dome-shaped Buddhist shrine walked around clockwise by pilgrims.",
     "White hemispherical dome, gilded spire, painted eyes", "Pagoda"},
}};

const KnownConcept* find_known(std::string_view name) {
  for (const auto& k : kKnown) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

const KnownConcept* find_known(std::string_view country, Category category) {
  for (const auto& k : kKnown) {
    if (k.country == country && k.category == category) return &k;
  }
  return nullptr;
}

constexpr std::array<std::string_view, 16> kSyllables = {
    "ka", "lo", "mi", "ra", "tu", "sen", "ba", "no", "vi", "zhe", "pa", "qu", "ri", "do", "fa", "yan"};

std::string pseudo_word(std::uint64_t h) {
  std::string word;
  const std::size_t n = 2 + h % 2;
  for (std::size_t i = 0; i < n; ++i) {
    h = mix64(h);
    word += kSyllables[h % kSyllables.size()];
  }
  word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  return word;
}

struct CategoryHint {
  Category category;
  std::array<std::string_view, 4> keywords;
  std::string_view features;
};

constexpr std::array<CategoryHint, 8> kHints = {{
    {Category::Cuisine, {"dish", "food", "bread", "dumpling"}, "Glazed surface, layered filling, served on a ceramic plate"},
    {Category::Clothing, {"garment", "dress", "robe", "hat"}, "Embroidered hems, layered fabric, wide sash"},
    {Category::AnimalPlants, {"tree", "flower", "animal", "bird"}, "Slender stems, bright petals, glossy leaves"},
    {Category::Art, {"painting", "instrument", "sculpture", "dance"}, "Carved wooden frame, inlaid patterns, muted pigments"},
    {Category::Architecture, {"temple", "house", "bridge", "tower"}, "Curved roof, timber columns, stone base"},
    {Category::DailyLife, {"tool", "game", "market", "household"}, "Woven handle, rounded body, worn natural finish"},
    {Category::Symbol, {"symbol", "emblem", "deity", "charm"}, "Red and gold colors, knotted cord, circular motif"},
    {Category::Festival, {"festival", "holiday", "celebration", "ceremony"}, "Lanterns, garlands, crowds in bright clothing"},
}};

constexpr std::array<std::string_view, 24> kCountries = {
    "China", "Japan", "India", "Mexico", "Nigeria", "Peru", "Italy", "France",
    "Turkey", "Egypt", "Brazil", "South Korea", "Thailand", "Vietnam", "Morocco", "Greece",
    "Spain", "Indonesia", "Philippines", "Nepal", "Ethiopia", "Ghana", "Iran", "Kenya"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const CategoryHint& hint_for(Category c) {
  return kHints[static_cast<std::size_t>(c)];
}

std::optional<Category> guess_category(std::string_view text) {
  const std::string t = lower(text);
  for (const auto& hint : kHints) {
    for (auto kw : hint.keywords) {
      if (t.find(kw) != std::string::npos) return hint.category;
    }
  }
  return std::nullopt;
}

std::string guess_country(std::string_view text) {
  for (auto c : kCountries) {
    if (text.find(c) != std::string_view::npos) return std::string(c);
  }
  return "Unknown";
}

std::string field_or(const BackendRequest& r, const std::string& key, std::string fallback = {}) {
  auto it = r.fields.find(key);
  return it == r.fields.end() ? fallback : it->second;
}

std::string mock_filter(const BackendRequest& r) {
  const std::string title = field_or(r, "title");
  bool keep = find_known(title) != nullptr;
  if (!keep && title.rfind("List of", 0) != 0 && title.find("(disambiguation)") == std::string::npos) {
    keep = guess_category(title + " " + field_or(r, "definition")).has_value();
  }
  return std::string("{\"concept_type\": \"") + (keep ? "B" : "A") + "\"}";
}

std::string mock_classify(const BackendRequest& r) {
  const std::string name = field_or(r, "concept");
  const std::string definition = field_or(r, "definition");
  std::ostringstream out;
  if (const auto* k = find_known(name)) {
    out << "Country: " << k->country << "\nCategory: " << category_name(k->category)
        << "\nContext: " << k->context << "\nKey Visual Features: " << k->features << "\n";
    return out.str();
  }
  const Category category = guess_category(name + " " + definition).value_or(Category::DailyLife);
  std::string features = field_or(r, "caption");
  if (features.empty()) features = std::string(hint_for(category).features);
  out << "Country: " << guess_country(definition) << "\nCategory: " << category_name(category)
      << "\nContext: " << definition << "\nKey Visual Features: " << features << "\n";
  return out.str();
}

std::string mock_top_down(const BackendRequest& r, std::uint64_t seed) {
  const std::string country = field_or(r, "country");
  const auto category = parse_category(field_or(r, "category"));
  std::ostringstream out;
  if (category) {
    if (const auto* k = find_known(country, *category)) {
      out << "Concept: " << k->name << "\nContext: " << k->context
          << "\nKey Visual Features: " << k->features << "\n";
      return out.str();
    }
  }
  const Category c = category.value_or(Category::DailyLife);
  const std::string name = pseudo_word(derive_seed(seed, "mock/top-down/" + country + "/" +
                                                             std::string(category_name(c))));
  out << "Concept: " << name << "\nContext: A " << lower(category_name(c)) << " tradition from "
      << country << " kept alive in family practice.\nKey Visual Features: "
      << hint_for(c).features << "\n";
  return out.str();
}

std::string mock_twin(const BackendRequest& r, std::uint64_t seed) {
  const std::string name = field_or(r, "concept");
  std::ostringstream out;
  if (const auto* k = find_known(name)) {
    if (const auto* t = find_known(k->twin)) {
      out << "New Concept: " << t->name << "\nNew Country: " << t->country
          << "\nNew Context: " << t->context << "\nNew Key Visual Features: " << t->features << "\n";
      return out.str();
    }
  }
  std::string twin = pseudo_word(derive_seed(seed, "mock/twin/" + name));
  if (twin == name) twin += "n";
  out << "New Concept: " << twin << "\nNew Context: A counterpart of " << name
      << " from a neighbouring culture.\nNew Key Visual Features: "
      << field_or(r, "visual_features") << ", with a different trim color\n";
  return out.str();
}

constexpr std::array<std::string_view, 12> kStyles = {
    "A close-up photograph of", "A watercolor painting of", "A wide shot of",
    "An overhead view of", "A vintage photograph of", "A pencil sketch of",
    "A softly lit photograph of", "A documentary photo of", "A cinematic shot of",
    "A minimalist illustration of", "A candid snapshot of", "A studio photograph of"};
constexpr std::array<std::string_view, 12> kScenes = {
    "at a busy street market", "during a family gathering", "in a museum display",
    "at a seasonal festival", "in a quiet village home", "at a city restaurant",
    "beside a window at dawn", "in a school classroom", "at a wedding banquet",
    "in a temple courtyard", "in a modern apartment", "at an evening fair"};

std::string mock_captions(const BackendRequest& r) {
  const std::string name = field_or(r, "concept");
  std::string features = field_or(r, "visual_features");
  while (!features.empty() && (features.back() == '.' || std::isspace(static_cast<unsigned char>(features.back())))) {
    features.pop_back();
  }
  if (!features.empty()) features[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(features[0])));
  const std::size_t k = std::stoul(field_or(r, "k", "10"));
  std::ostringstream out;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& style = kStyles[j % kStyles.size()];
    const auto& scene = kScenes[(j + 5 * (j / kStyles.size())) % kScenes.size()];
    out << (j + 1) << ". " << style << ' ' << name << " with " << features << ", " << scene << ".\n";
  }
  return out.str();
}

int hashed_score(std::uint64_t h) {
  const double u = unit_interval(h);
  if (u < 0.03) return 1;
  if (u < 0.10) return 2;
  if (u < 0.30) return 3;
  if (u < 0.70) return 4;
  return 5;
}

bool is_judge_template(std::string_view id) {
  return id == kTemplateJudgeAuthenticity || id == kTemplateJudgeConsistency ||
         id == kTemplateJudgeFidelity;
}

}  // namespace

std::string_view to_string(JudgeMode mode) noexcept {
  switch (mode) {
    case JudgeMode::Constant: return "constant";
    case JudgeMode::Hashed: return "hashed";
    case JudgeMode::RejectAll: return "reject_all";
  }
  return "constant";
}

std::optional<JudgeMode> parse_judge_mode(std::string_view text) noexcept {
  for (auto m : {JudgeMode::Constant, JudgeMode::Hashed, JudgeMode::RejectAll}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

MockBackend::MockBackend(MockOptions options) : options_(options) {
  require(options_.feature_dim >= kMinTextFeatureDim, ErrorCode::InvalidArgument,
          "mock feature_dim below minimum");
}

BackendResponse MockBackend::generate_text(const BackendRequest& request) {
  const std::string& id = request.template_id;
  if (id == kTemplateBottomUpFilter) return {mock_filter(request)};
  if (id == kTemplateBottomUpClassify) return {mock_classify(request)};
  if (id == kTemplateTopDown) return {mock_top_down(request, options_.seed)};
  if (id == kTemplateTwinMatch) return {mock_twin(request, options_.seed)};
  if (id == kTemplateCaptions) return {mock_captions(request)};
  if (is_judge_template(id)) return {judge(request)};
  fail(ErrorCode::InvalidArgument, "mock backend: unknown template '" + id + "'");
}

std::string MockBackend::judge(const BackendRequest& request) const {
  if (options_.judge == JudgeMode::RejectAll) return "1";
  std::string caption;
  {
    std::lock_guard lock(mutex_);
    auto it = image_captions_.find(request.image_ref);
    if (it != image_captions_.end()) caption = it->second;
  }
  if (request.template_id == kTemplateJudgeAuthenticity &&
      lower(caption).find("three hands") != std::string::npos) {
    return "1";
  }
  if (options_.judge == JudgeMode::Constant) return "4";
  const std::uint64_t h = mix64(options_.seed ^ fnv1a64(request.template_id) ^
                                mix64(fnv1a64(request.image_ref)));
  return std::to_string(hashed_score(h));
}

GeneratedImage MockBackend::generate_image(std::string_view caption) {
  require(!caption.empty(), ErrorCode::InvalidArgument, "empty caption");
  const std::uint64_t h = mix64(fnv1a64(caption) ^ mix64(options_.seed));
  GeneratedImage image;
  image.ref = std::string(kCachePrefix) + "img-" + hex64(h);

  const auto dim = static_cast<Eigen::Index>(options_.feature_dim);
  Eigen::VectorXd v = text_features(caption, options_.feature_dim).values;
  std::mt19937_64 rng(h);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (Eigen::Index i = 0; i < dim; ++i) v[i] += options_.image_noise * gauss(rng);
  v /= v.norm();
  image.features = std::move(v);

  std::lock_guard lock(mutex_);
  image_captions_.emplace(image.ref, std::string(caption));
  return image;
}

HttpOptions http_options_from_env(HttpOptions options) {
  if (options.url.empty()) {
    if (const char* url = std::getenv("BACKEND_URL")) options.url = url;
  }
  if (options.token.empty()) {
    if (const char* token = std::getenv("BACKEND_TOKEN")) options.token = token;
  }
  return options;
}

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  require(!options_.url.empty(), ErrorCode::ConfigError, "no backend URL (set BACKEND_URL)");
  require(options_.attempts >= 1, ErrorCode::ConfigError, "attempts must be at least 1");
  const auto scheme_end = options_.url.find("://");
  require(scheme_end != std::string::npos, ErrorCode::ConfigError,
          "backend URL needs a scheme: " + options_.url);
  const auto path_start = options_.url.find('/', scheme_end + 3);
  origin_ = options_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : options_.url.substr(path_start);
}

std::string HttpBackend::post(const std::string& body) {
  httplib::Client client(origin_);
  require(client.is_valid(), ErrorCode::ConfigError, "invalid backend URL: " + options_.url);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.token.empty()) headers.emplace("Authorization", "Bearer " + options_.token);

  std::string last_error;
  auto delay = options_.backoff;
  std::size_t made = 0;
  for (std::size_t attempt = 0; attempt < options_.attempts; ++attempt) {
    ++made;
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status);
    if (res->status < 500 && res->status != 429) break;
  }
  fail(ErrorCode::BackendUnavailable,
       options_.url + ": " + last_error + " after " + std::to_string(made) + " attempt(s)");
}

BackendResponse HttpBackend::generate_text(const BackendRequest& request) {
  json body = {{"template_id", request.template_id}, {"prompt", request.prompt}};
  if (!request.image_ref.empty() && !request.image_ref.starts_with(kCachePrefix)) {
    std::ifstream in(options_.image_dir / request.image_ref, std::ios::binary);
    require(in.good(), ErrorCode::IoFailure, "cannot read image " + request.image_ref);
    std::ostringstream ss;
    ss << in.rdbuf();
    body["image_b64"] = base64_encode(ss.str());
  }
  const std::string raw = post(body.dump());
  const json reply = json::parse(raw, nullptr, false);
  require(!reply.is_discarded() && reply.is_object() && reply.contains("text") &&
              reply["text"].is_string(),
          ErrorCode::ParseFailure, "backend reply lacks a \"text\" string");
  return {reply["text"].get<std::string>()};
}

GeneratedImage HttpBackend::generate_image(std::string_view caption) {
  require(!caption.empty(), ErrorCode::InvalidArgument, "empty caption");
  const json body = {{"template_id", kImageSynthesisId}, {"prompt", caption}};
  const json reply = json::parse(post(body.dump()), nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("image_b64") ||
      !reply["image_b64"].is_string()) {
    fail(ErrorCode::GenerationRejected, "backend returned no image for: " + std::string(caption));
  }
  const std::string bytes = base64_decode(reply["image_b64"].get<std::string>());
  const std::string ref = "images/" + hex64(fnv1a64(caption)) + ".pnm";
  const auto path = options_.image_dir / ref;
  std::filesystem::create_directories(path.parent_path());
  atomic_write(path, bytes);
  try {
    (void)read_raster(path);
  } catch (const Error& e) {
    std::filesystem::remove(path);
    fail(ErrorCode::GenerationRejected, "undecodable image: " + e.detail());
  }
  return {ref, std::nullopt};
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  require(clean.size() % 4 == 0, ErrorCode::ParseFailure, "base64 length not a multiple of 4");
  std::string out(3 * clean.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()),
                                static_cast<int>(clean.size()));
  require(n >= 0, ErrorCode::ParseFailure, "malformed base64");
  std::size_t padding = 0;
  if (!clean.empty() && clean.back() == '=') ++padding;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

}  // namespace twinclip
