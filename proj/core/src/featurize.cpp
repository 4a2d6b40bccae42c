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

#include "twinclip/featurize.hpp"

#include <cmath>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

namespace {

std::vector<char32_t> decode_utf8_folded(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp = c;
    std::size_t len = 1;
    if (c >= 0xF0 && c < 0xF8) {
      cp = c & 0x07;
      len = 4;
    } else if (c >= 0xE0) {
      cp = c & 0x0F;
      len = 3;
    } else if (c >= 0xC0) {
      cp = c & 0x1F;
      len = 2;
    }
    bool ok = i + len <= s.size() && c < 0xF8 && !(c >= 0x80 && c < 0xC0);
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      // Invalid sequences contribute the raw byte, offset past the BMP.
      cp = 0x110000u + c;
      len = 1;
    }
    if (cp >= U'A' && cp <= U'Z') cp += U'a' - U'A';
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_gram_bytes(std::string& buf, char32_t cp) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    buf.push_back(static_cast<char>((cp >> shift) & 0xFF));
  }
}

FeatureVector finalize(Eigen::VectorXd raw, SourceKind kind) {
  FeatureVector fv;
  fv.kind = kind;
  const double norm = raw.norm();
  if (norm == 0.0) {
    fv.degenerate = true;
  } else {
    raw /= norm;
  }
  fv.values = std::move(raw);
  return fv;
}

void skip_pnm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_pnm_int(std::istream& in, const std::string& where) {
  skip_pnm_space(in);
  long long v = -1;
  in >> v;
  if (!in || v < 0) fail(ErrorCode::UnreadableImage, where + ": bad header");
  return static_cast<std::size_t>(v);
}

}  // namespace

FeatureVector text_features(std::string_view text, std::size_t dim) {
  require(dim >= kMinTextFeatureDim, ErrorCode::InvalidArgument, "text feature dim must be >= 16");
  const auto cps = decode_utf8_folded(text);
  bool any_visible = false;
  for (char32_t cp : cps) {
    if (!(cp < 0x80 && std::isspace(static_cast<int>(cp)))) any_visible = true;
  }
  if (!any_visible) fail(ErrorCode::EmptyText, "text is empty");

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  std::string gram;
  auto add = [&](std::size_t begin, std::size_t end) {
    gram.clear();
    for (std::size_t k = begin; k < end; ++k) append_gram_bytes(gram, cps[k]);
    counts[static_cast<Eigen::Index>(fnv1a64(gram) % dim)] += 1.0;
  };
  if (cps.size() < 3) {
    add(0, cps.size());
  } else {
    for (std::size_t i = 0; i + 3 <= cps.size(); ++i) add(i, i + 3);
  }
  return finalize(std::move(counts), SourceKind::Text);
}

Raster read_raster(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::UnreadableImage, where + ": cannot open");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P') fail(ErrorCode::UnreadableImage, where + ": not a PNM file");
  const char kind = magic[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    fail(ErrorCode::UnreadableImage, where + ": unsupported PNM variant");
  }
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  Raster r;
  r.width = read_pnm_int(in, where);
  r.height = read_pnm_int(in, where);
  const std::size_t maxval = read_pnm_int(in, where);
  if (r.width == 0 || r.height == 0 || maxval == 0 || maxval > 65535) {
    fail(ErrorCode::UnreadableImage, where + ": bad dimensions");
  }
  const std::size_t channels = color ? 3 : 1;
  const std::size_t samples = r.width * r.height * channels;
  std::vector<std::size_t> raw(samples);
  if (binary) {
    in.get();  // single whitespace after maxval
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(samples * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
      fail(ErrorCode::UnreadableImage, where + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < samples; ++i) {
      raw[i] = bytes == 2 ? (std::size_t{buf[2 * i]} << 8) | buf[2 * i + 1] : buf[i];
    }
  } else {
    for (std::size_t i = 0; i < samples; ++i) raw[i] = read_pnm_int(in, where);
  }
  r.rgb.resize(r.width * r.height * 3);
  for (std::size_t p = 0; p < r.width * r.height; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t v = raw[p * channels + (color ? c : 0)];
      if (v > maxval) fail(ErrorCode::UnreadableImage, where + ": sample exceeds maxval");
      r.rgb[p * 3 + c] = static_cast<float>(static_cast<double>(v) / static_cast<double>(maxval));
    }
  }
  return r;
}

void write_ppm(const std::filesystem::path& path, const Raster& raster) {
  std::ostringstream out;
  out << "P6\n" << raster.width << ' ' << raster.height << "\n255\n";
  for (float v : raster.rgb) {
    const double clamped = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  atomic_write(path, out.str());
}

FeatureVector raster_features(const Raster& raster, std::size_t dim) {
  require(dim >= 1, ErrorCode::InvalidArgument, "image feature dim must be >= 1");
  require(raster.rgb.size() == raster.width * raster.height * 3 && !raster.rgb.empty(),
          ErrorCode::UnreadableImage, "raster buffer does not match its dimensions");
  std::array<double, kImageRawDim> sums{};
  std::array<std::size_t, kImageGrid * kImageGrid> hits{};
  for (std::size_t y = 0; y < raster.height; ++y) {
    const std::size_t gy = y * kImageGrid / raster.height;
    for (std::size_t x = 0; x < raster.width; ++x) {
      const std::size_t gx = x * kImageGrid / raster.width;
      const std::size_t cell = gy * kImageGrid + gx;
      ++hits[cell];
      for (std::size_t c = 0; c < 3; ++c) {
        sums[cell * 3 + c] += raster.rgb[(y * raster.width + x) * 3 + c];
      }
    }
  }
  Eigen::VectorXd folded = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < kImageRawDim; ++i) {
    const std::size_t cell = i / 3;
    const double mean = hits[cell] ? sums[i] / static_cast<double>(hits[cell]) : 0.0;
    folded[static_cast<Eigen::Index>(i % dim)] += mean;
  }
  return finalize(std::move(folded), SourceKind::Image);
}

bool EmbeddingCache::contains(std::string_view key) const { return find(key) != nullptr; }

const Eigen::VectorXd* EmbeddingCache::find(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingCache::insert(std::string key, Eigen::VectorXd values) {
  if (static_cast<std::size_t>(values.size()) != dim_) {
    fail(ErrorCode::DimensionMismatch, "cache entry '" + key + "' has length " +
                                           std::to_string(values.size()) + ", expected " +
                                           std::to_string(dim_));
  }
  if (!values.allFinite()) fail(ErrorCode::InvalidArgument, "cache entry '" + key + "' not finite");
  entries_.insert_or_assign(std::move(key), std::move(values));
}

std::uint64_t EmbeddingCache::checksum() const {
  std::uint64_t h = fnv1a64(std::to_string(dim_));
  for (const auto& [key, values] : entries_) {
    h = fnv1a64(key, h);
    h = fnv1a64(std::as_bytes(std::span(values.data(), static_cast<std::size_t>(values.size()))),
                h);
  }
  return h;
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  using nlohmann::json;
  std::string body =
      json{{"dim", dim_}, {"count", entries_.size()}, {"checksum", hex64(checksum())}}.dump();
  body += '\n';
  for (const auto& [key, values] : entries_) {
    json row{{"key", key},
             {"values", std::vector<double>(values.data(), values.data() + values.size())}};
    body += row.dump();
    body += '\n';
  }
  atomic_write(path, body);
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::MalformedJson, path.string() + ": missing header");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.contains("dim") || !header.contains("count")) {
    fail(ErrorCode::MalformedJson, path.string() + ":1: bad cache header");
  }
  EmbeddingCache cache(header["dim"].get<std::size_t>());
  const auto expected = header["count"].get<std::size_t>();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.contains("key") || !row.contains("values")) {
      fail(ErrorCode::MalformedJson, path.string() + ":" + std::to_string(line_no));
    }
    auto values = row["values"].get<std::vector<double>>();
    cache.insert(row["key"].get<std::string>(),
                 Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
  }
  if (cache.size() != expected) {
    fail(ErrorCode::ChecksumMismatch, path.string() + ": header count " + std::to_string(expected) +
                                          " but " + std::to_string(cache.size()) + " entries");
  }
  if (header.contains("checksum") && header["checksum"].get<std::string>() != hex64(cache.checksum())) {
    fail(ErrorCode::ChecksumMismatch, path.string() + ": checksum mismatch");
  }
  return cache;
}

FeatureVector image_features(std::string_view ref, std::size_t dim, const EmbeddingCache* cache,
                             const std::filesystem::path& base_dir) {
  const Eigen::VectorXd* hit = nullptr;
  const bool cache_ref = ref.substr(0, kCachePrefix.size()) == kCachePrefix;
  if (cache != nullptr) {
    hit = cache->find(cache_ref ? ref.substr(kCachePrefix.size()) : ref);
  }
  if (cache_ref && hit == nullptr) {
    fail(ErrorCode::UnreadableImage, "no cache entry for '" + std::string(ref) + "'");
  }
  if (hit != nullptr) {
    if (static_cast<std::size_t>(hit->size()) != dim) {
      fail(ErrorCode::DimensionMismatch, "cache entry for '" + std::string(ref) + "' has length " +
                                             std::to_string(hit->size()) + ", expected " +
                                             std::to_string(dim));
    }
    const double norm = hit->norm();
    FeatureVector fv;
    fv.kind = SourceKind::Image;
    if (norm == 0.0) {
      fv.values = *hit;
      fv.degenerate = true;
    } else if (std::abs(norm - 1.0) <= 1e-12) {
      fv.values = *hit;
    } else {
      fv.values = *hit / norm;
    }
    return fv;
  }
  std::filesystem::path p(ref);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return raster_features(read_raster(p), dim);
}

FeatureResolver::FeatureResolver(std::size_t dim, const EmbeddingCache* cache,
                                 std::filesystem::path base_dir)
    : dim_(dim), cache_(cache), base_dir_(std::move(base_dir)) {}

const FeatureVector& FeatureResolver::text(std::string_view text) {
  auto it = text_memo_.find(std::string(text));
  if (it != text_memo_.end()) return it->second;
  return text_memo_.emplace(std::string(text), text_features(text, dim_)).first->second;
}

const FeatureVector& FeatureResolver::image(std::string_view ref) {
  auto it = image_memo_.find(std::string(ref));
  if (it != image_memo_.end()) return it->second;
  return image_memo_.emplace(std::string(ref), image_features(ref, dim_, cache_, base_dir_))
      .first->second;
}

}  // namespace twinclip
