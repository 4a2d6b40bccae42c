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

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "twinclip/featurize.hpp"

namespace twinclip {

struct BackendRequest {
  std::string template_id;
  std::string prompt;
  /// Slot values the prompt was rendered from. Not sent over HTTP; the mock
  /// reads them instead of parsing the prompt back.
  std::map<std::string, std::string> fields;
  /// Image attached to the request (judge calls), empty when none.
  std::string image_ref;
};

struct BackendResponse {
  std::string text;
};

struct GeneratedImage {
  std::string ref;
  /// Present when the backend produces features directly rather than a file;
  /// the caller stores them in the embedding cache under the ref's key.
  std::optional<Eigen::VectorXd> features;
};

/// Generator and judge share this interface. Implementations must tolerate
/// concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResponse generate_text(const BackendRequest& request) = 0;
  virtual GeneratedImage generate_image(std::string_view caption) = 0;
};

enum class JudgeMode {
  Constant,   // every dimension scores 4
  Hashed,     // seeded per-image scores with a realistic pass rate
  RejectAll,  // every dimension scores 1
};

std::string_view to_string(JudgeMode mode) noexcept;
std::optional<JudgeMode> parse_judge_mode(std::string_view text) noexcept;

struct MockOptions {
  std::uint64_t seed = 0;
  std::size_t feature_dim = kDefaultFeatureDim;
  JudgeMode judge = JudgeMode::Constant;
  /// Weight of the seeded Gaussian mixed into the caption's text features
  /// when synthesizing an image vector.
  double image_noise = 0.5;
};

/// Deterministic offline backend. Knows a handful of concepts by name and
/// invents pseudo-words for everything else.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockOptions options = {});

  BackendResponse generate_text(const BackendRequest& request) override;
  GeneratedImage generate_image(std::string_view caption) override;

  const MockOptions& options() const noexcept { return options_; }

 private:
  std::string judge(const BackendRequest& request) const;

  MockOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string, std::less<>> image_captions_;
};

struct HttpOptions {
  std::string url;
  std::string token;
  std::size_t attempts = 3;
  std::chrono::milliseconds backoff{250};
  std::chrono::seconds timeout{60};
  /// Generated rasters are written here; refs are relative to it.
  std::filesystem::path image_dir = ".";
};

/// Reads BACKEND_URL and BACKEND_TOKEN into `options` where they are unset.
HttpOptions http_options_from_env(HttpOptions options = {});

/// POSTs `{"template_id", "prompt", "image_b64"?}` and expects `{"text"}`;
/// image synthesis expects `{"image_b64"}` holding a PPM or PGM file.
/// Transport errors, 5xx and 429 are retried with doubling backoff.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);

  BackendResponse generate_text(const BackendRequest& request) override;
  GeneratedImage generate_image(std::string_view caption) override;

 private:
  std::string post(const std::string& body);

  HttpOptions options_;
  std::string origin_;
  std::string path_;
};

std::string base64_encode(std::string_view bytes);
/// Throws ParseFailure on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace twinclip
