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

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "twinclip/encoder.hpp"

namespace twinclip {

struct LossConfig {
  double tau = 0.07;
  double lambda_caption = 0.3;
  double lambda_concept = 0.7;

  void validate() const;
};

/// Gradients are listed in argument order; `parts` holds the named sub-terms
/// (e.g. "i2t"/"t2i", "caption"/"concept") before weighting.
struct LossOutput {
  double value = 0.0;
  std::vector<Matrix> grads;
  std::map<std::string, double> parts;
};

/// The six embedding roles of a Twin Card batch.
enum class Role : std::size_t {
  ImagePos,
  ImageNeg,
  CaptionPos,
  CaptionNeg,
  ConceptPos,
  ConceptNeg,
};
inline constexpr std::size_t kRoleCount = 6;

struct EmbeddingBatch {
  std::array<Matrix, kRoleCount> roles;  // each N x d, unit rows

  Matrix& operator[](Role r) { return roles[static_cast<std::size_t>(r)]; }
  const Matrix& operator[](Role r) const { return roles[static_cast<std::size_t>(r)]; }
};

/// S = A B^T.
Matrix similarity(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// Numerically stable softmax of every row.
Matrix row_softmax(const Eigen::Ref<const Matrix>& logits);

/// Symmetric InfoNCE: mean row-direction cross entropy plus mean
/// column-direction cross entropy, each with target on the diagonal.
LossOutput clip_loss(const Matrix& image, const Matrix& text, double tau);

/// Image-to-text term over the 2N candidates (all positives and all hard
/// negatives) plus the ordinary text-to-image term on the positives.
LossOutput negclip_loss(const Matrix& image, const Matrix& text_pos, const Matrix& text_neg,
                        double tau);

/// negclip(I+, T+, T-) + negclip(I-, T-, T+). Gradients: I+, I-, T+, T-.
LossOutput tripletclip_loss(const Matrix& image_pos, const Matrix& image_neg,
                            const Matrix& text_pos, const Matrix& text_neg, double tau);

/// lambda_caption * [negclip(I+,T+,T-) + negclip(I-,T-,T+)]
///   + lambda_concept * [negclip(I+,C+,C-) + negclip(I-,C-,C+)].
/// Gradients are indexed by Role.
LossOutput cultureclip_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

}  // namespace twinclip
