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
#include <string_view>

#include <Eigen/Core>

#include "twinclip/featurize.hpp"

namespace twinclip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Frozen base map from features (F) to the embedding space (d).
struct LinearEncoder {
  Matrix weight;  // d x F
  bool frozen = true;
  std::uint64_t init_seed = 0;

  std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weight.rows()); }
  std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weight.cols()); }
};

/// Low-rank update dW = (alpha / r) * B * A.
struct LoraAdapter {
  Matrix a;  // r x F
  Matrix b;  // d x r
  double alpha = 1.0;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(a.rows()); }
  double scale() const noexcept { return alpha / static_cast<double>(rank()); }
  Matrix delta() const { return scale() * (b * a); }
};

struct EncoderPair {
  LinearEncoder image;
  LinearEncoder text;
};

/// Gaussian entries scaled by 1/sqrt(F). The image and text encoders draw from
/// seeds derived from `seed`, so they never coincide. Entries are rounded to
/// float32 so that checkpoints reproduce them exactly.
EncoderPair init_encoders(std::size_t d, std::size_t feature_dim, std::uint64_t seed);

/// A ~ N(0, 1/F), B = 0, so a fresh adapter leaves the base map unchanged.
/// `alpha <= 0` selects alpha = rank.
LoraAdapter init_lora(std::size_t d, std::size_t feature_dim, std::size_t rank, double alpha,
                      std::uint64_t seed);

void check_compatible(const LinearEncoder& enc, const LoraAdapter& adapter);

/// Pre-normalization output v = (W + dW) x.
Vector project(const Eigen::Ref<const Vector>& x, const LinearEncoder& enc,
               const LoraAdapter* adapter = nullptr);

/// u = v / |v|; throws DegenerateOutput when |v| < 1e-12.
Vector encode(const Eigen::Ref<const Vector>& x, const LinearEncoder& enc,
              const LoraAdapter* adapter = nullptr);
Vector encode(const FeatureVector& features, const LinearEncoder& enc,
              const LoraAdapter* adapter = nullptr);

enum class TextRole { Concept, Caption };

/// Concepts and captions go through the same text encoder; `role` is carried
/// for call-site clarity only and does not influence the result.
Vector encode_text_shared(std::string_view text, TextRole role, const LinearEncoder& enc,
                          const LoraAdapter* adapter = nullptr);

/// Returns W + dW as a frozen encoder. Not idempotent: merging the result
/// with the same adapter again adds dW a second time.
LinearEncoder lora_merge(const LinearEncoder& enc, const LoraAdapter& adapter);

/// Batched forward pass over the columns of `features` (F x N). Rows of
/// `projected` / `unit` are the per-item v and u; `low_rank` holds A x.
struct BatchEncoding {
  Matrix features;   // F x N
  Matrix low_rank;   // N x r, empty without adapter
  Matrix projected;  // N x d
  Matrix unit;       // N x d
  Vector norms;      // N
};

BatchEncoding encode_batch(Matrix features, const LinearEncoder& enc,
                           const LoraAdapter* adapter = nullptr);

/// Chains dL/du through the normalization Jacobian (I - u u^T) / |v|.
Matrix normalize_backward(const BatchEncoding& enc, const Eigen::Ref<const Matrix>& grad_unit);

struct LoraGrad {
  Matrix a;
  Matrix b;
};

LoraGrad zero_grad_like(const LoraAdapter& adapter);

/// Accumulates dL/dA and dL/dB given dL/dv for every row of the batch.
void accumulate_lora_grad(const BatchEncoding& enc, const Eigen::Ref<const Matrix>& grad_projected,
                          const LoraAdapter& adapter, LoraGrad& out);

/// dL/dW for full fine-tuning.
void accumulate_weight_grad(const BatchEncoding& enc,
                            const Eigen::Ref<const Matrix>& grad_projected, Matrix& out);

/// Rounds every entry to the nearest float32.
void snap_to_float32(Matrix& m);

std::uint64_t weight_checksum(const Matrix& m);

}  // namespace twinclip
