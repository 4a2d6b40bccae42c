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
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace twinclip {

inline constexpr std::size_t kDefaultFeatureDim = 2048;
inline constexpr std::size_t kMinTextFeatureDim = 16;
inline constexpr std::size_t kImageGrid = 8;
inline constexpr std::size_t kImageRawDim = kImageGrid * kImageGrid * 3;
inline constexpr std::string_view kCachePrefix = "cache:";

enum class SourceKind { Text, Image };

struct FeatureVector {
  Eigen::VectorXd values;
  SourceKind kind = SourceKind::Text;
  /// Set when the raw features were all zero; such vectors cannot take part
  /// in a contrastive batch.
  bool degenerate = false;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(values.size()); }
};

/// Hashed character-trigram counts folded into `dim` buckets, case-folded and
/// L2-normalized. Trigrams run over Unicode code points; strings shorter than
/// three code points hash as a single gram.
FeatureVector text_features(std::string_view text, std::size_t dim = kDefaultFeatureDim);

/// Decoded RGB raster with channel values in [0, 1], row-major, interleaved.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> rgb;
};

/// Reads binary or ASCII PPM (P6/P3) and PGM (P5/P2) files.
Raster read_raster(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Raster& raster);

/// 8x8x3 mean-pooled grid, folded (index mod dim) or zero-padded to `dim`.
FeatureVector raster_features(const Raster& raster, std::size_t dim = kDefaultFeatureDim);

class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::size_t dim = kDefaultFeatureDim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(std::string_view key) const;
  const Eigen::VectorXd* find(std::string_view key) const;
  void insert(std::string key, Eigen::VectorXd values);
  const std::map<std::string, Eigen::VectorXd, std::less<>>& entries() const noexcept {
    return entries_;
  }

  /// FNV-1a over keys and the raw IEEE-754 bytes of every value.
  std::uint64_t checksum() const;

  /// Header line `{"dim", "count", "checksum"}` then one `{"key", "values"}` per line.
  void save(const std::filesystem::path& path) const;
  static EmbeddingCache load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  std::map<std::string, Eigen::VectorXd, std::less<>> entries_;
};

/// Resolves an image reference: `cache:<key>` must hit the cache; any other
/// string is looked up in the cache verbatim first and otherwise decoded as a
/// raster path relative to `base_dir`.
FeatureVector image_features(std::string_view ref, std::size_t dim,
                             const EmbeddingCache* cache = nullptr,
                             const std::filesystem::path& base_dir = {});

/// Memoizing front end used by training and evaluation. Not thread-safe.
class FeatureResolver {
 public:
  FeatureResolver(std::size_t dim, const EmbeddingCache* cache = nullptr,
                  std::filesystem::path base_dir = {});

  std::size_t dim() const noexcept { return dim_; }
  const FeatureVector& text(std::string_view text);
  const FeatureVector& image(std::string_view ref);

 private:
  std::size_t dim_;
  const EmbeddingCache* cache_;
  std::filesystem::path base_dir_;
  std::unordered_map<std::string, FeatureVector> text_memo_;
  std::unordered_map<std::string, FeatureVector> image_memo_;
};

}  // namespace twinclip
