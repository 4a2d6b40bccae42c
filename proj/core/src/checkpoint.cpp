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

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"
#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"
#include "twinclip/model.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

namespace {

constexpr const char* kFormat = "twinclip-checkpoint/1";

void append_f32(std::string& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c)));
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
}

Matrix read_f32(const std::string& payload, std::size_t& offset, std::size_t rows,
                std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[offset + b]))
                << (8 * b);
      }
      offset += 4;
      m(r, c) = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return m;
}

}  // namespace

EncoderPair ModelState::merged() const {
  return {lora_merge(base.image, image_lora), lora_merge(base.text, text_lora)};
}

ModelState init_model(const ModelShape& shape, std::uint64_t seed) {
  ModelState state;
  state.seed = seed;
  state.base = init_encoders(shape.embed_dim, shape.feature_dim, seed);
  state.image_lora = init_lora(shape.embed_dim, shape.feature_dim, shape.rank, shape.alpha,
                               derive_seed(seed, "lora/image"));
  state.text_lora = init_lora(shape.embed_dim, shape.feature_dim, shape.rank, shape.alpha,
                              derive_seed(seed, "lora/text"));
  return state;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::string payload;
  for (const Matrix* m : {&state.base.image.weight, &state.base.text.weight, &state.image_lora.a,
                          &state.image_lora.b, &state.text_lora.a, &state.text_lora.b}) {
    append_f32(payload, *m);
  }
  nlohmann::json meta{
      {"d", state.embed_dim()},
      {"F", state.feature_dim()},
      {"rank", state.rank()},
      {"alpha", state.alpha()},
      {"seed", state.seed},
      {"step", state.step},
      {"format", kFormat},
      {"dtype", "float32"},
      {"order", {"image_W", "text_W", "image_A", "image_B", "text_A", "text_B"}},
      {"optimizer", "sgd"},
      {"moment_buffers", 0},
      {"frozen", state.base.image.frozen && state.base.text.frozen},
      {"payload_bytes", payload.size()},
      {"checksum", hex64(fnv1a64(payload))},
  };
  std::string body = meta.dump();
  body += '\n';
  body += payload;
  atomic_write(path, body);
}

ModelState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelShape>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open checkpoint " + path.string());
  std::string header;
  if (!std::getline(in, header)) fail(ErrorCode::ChecksumMismatch, path.string() + ": empty file");
  nlohmann::json meta = nlohmann::json::parse(header, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) {
    fail(ErrorCode::ChecksumMismatch, path.string() + ": unreadable metadata line");
  }
  for (const char* key : {"d", "F", "rank", "alpha", "seed", "step", "payload_bytes", "checksum"}) {
    if (!meta.contains(key)) fail(ErrorCode::MissingField, path.string() + ": metadata " + key);
  }
  const auto d = meta["d"].get<std::size_t>();
  const auto f = meta["F"].get<std::size_t>();
  const auto r = meta["rank"].get<std::size_t>();
  if (expected) {
    if (expected->embed_dim != d || expected->feature_dim != f || expected->rank != r) {
      fail(ErrorCode::ShapeMismatch,
           path.string() + ": stored (d=" + std::to_string(d) + ", F=" + std::to_string(f) +
               ", rank=" + std::to_string(r) + ") but expected (d=" +
               std::to_string(expected->embed_dim) + ", F=" + std::to_string(expected->feature_dim) +
               ", rank=" + std::to_string(expected->rank) + ")");
    }
  }
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t want = 4 * (2 * d * f + 2 * (r * f + d * r));
  if (payload.size() != meta["payload_bytes"].get<std::size_t>() || payload.size() != want) {
    fail(ErrorCode::ChecksumMismatch, path.string() + ": payload has " +
                                          std::to_string(payload.size()) + " bytes, expected " +
                                          std::to_string(want));
  }
  if (hex64(fnv1a64(payload)) != meta["checksum"].get<std::string>()) {
    fail(ErrorCode::ChecksumMismatch, path.string() + ": payload checksum mismatch");
  }
  ModelState state;
  state.seed = meta["seed"].get<std::uint64_t>();
  state.step = meta["step"].get<std::size_t>();
  std::size_t offset = 0;
  state.base.image.weight = read_f32(payload, offset, d, f);
  state.base.text.weight = read_f32(payload, offset, d, f);
  state.image_lora.a = read_f32(payload, offset, r, f);
  state.image_lora.b = read_f32(payload, offset, d, r);
  state.text_lora.a = read_f32(payload, offset, r, f);
  state.text_lora.b = read_f32(payload, offset, d, r);
  state.image_lora.alpha = state.text_lora.alpha = meta["alpha"].get<double>();
  state.base.image.init_seed = derive_seed(state.seed, "encoder/image");
  state.base.text.init_seed = derive_seed(state.seed, "encoder/text");
  const bool frozen = meta.value("frozen", true);
  state.base.image.frozen = state.base.text.frozen = frozen;
  return state;
}

}  // namespace twinclip
