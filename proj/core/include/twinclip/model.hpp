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
#include <optional>

#include "twinclip/encoder.hpp"

namespace twinclip {

/// Everything a checkpoint holds: both base encoders, one adapter per
/// encoder and the optimizer position.
struct ModelState {
  EncoderPair base;
  LoraAdapter image_lora;
  LoraAdapter text_lora;
  std::uint64_t seed = 0;
  std::size_t step = 0;

  std::size_t embed_dim() const noexcept { return base.image.out_dim(); }
  std::size_t feature_dim() const noexcept { return base.image.in_dim(); }
  std::size_t rank() const noexcept { return image_lora.rank(); }
  double alpha() const noexcept { return image_lora.alpha; }

  /// Base encoders with their adapters folded in, as used for inference.
  EncoderPair merged() const;
};

struct ModelShape {
  std::size_t embed_dim = 64;
  std::size_t feature_dim = kDefaultFeatureDim;
  std::size_t rank = 4;
  double alpha = 0.0;  // <= 0 means alpha = rank
};

ModelState init_model(const ModelShape& shape, std::uint64_t seed);

/// Layout: one JSON metadata line, then little-endian float32 arrays in the
/// order image W, text W, image A, image B, text A, text B (row-major).
/// The metadata carries the payload size and an FNV-1a checksum.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);

/// Throws ShapeMismatch when `expected` is given and disagrees with the
/// stored dimensions, ChecksumMismatch on truncation or corruption.
ModelState load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelShape>& expected = std::nullopt);

}  // namespace twinclip
