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

#include "twinclip/encoder.hpp"

#include <cmath>
#include <random>
#include <span>
#include <string>

#include "twinclip/error.hpp"
#include "twinclip/hashing.hpp"

namespace twinclip {

namespace {

constexpr double kDegenerateNorm = 1e-12;

Matrix gaussian(std::size_t rows, std::size_t cols, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the layout of draws does not depend on storage order.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<float>(normal(rng) * scale);
    }
  }
  return m;
}

}  // namespace

EncoderPair init_encoders(std::size_t d, std::size_t feature_dim, std::uint64_t seed) {
  require(d >= 2, ErrorCode::InvalidArgument, "embedding dim d must be >= 2");
  require(feature_dim >= 1, ErrorCode::InvalidArgument, "feature dim must be >= 1");
  const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  EncoderPair pair;
  pair.image.init_seed = derive_seed(seed, "encoder/image");
  pair.text.init_seed = derive_seed(seed, "encoder/text");
  pair.image.weight = gaussian(d, feature_dim, scale, pair.image.init_seed);
  pair.text.weight = gaussian(d, feature_dim, scale, pair.text.init_seed);
  return pair;
}

LoraAdapter init_lora(std::size_t d, std::size_t feature_dim, std::size_t rank, double alpha,
                      std::uint64_t seed) {
  if (rank < 1 || rank > std::min(d, feature_dim)) {
    fail(ErrorCode::InvalidArgument, "LoRA rank " + std::to_string(rank) + " outside [1, " +
                                         std::to_string(std::min(d, feature_dim)) + "]");
  }
  LoraAdapter adapter;
  adapter.a = gaussian(rank, feature_dim, 1.0 / std::sqrt(static_cast<double>(feature_dim)), seed);
  adapter.b = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(rank));
  adapter.alpha = alpha > 0.0 ? alpha : static_cast<double>(rank);
  return adapter;
}

void check_compatible(const LinearEncoder& enc, const LoraAdapter& adapter) {
  if (adapter.a.cols() != enc.weight.cols() || adapter.b.rows() != enc.weight.rows() ||
      adapter.a.rows() != adapter.b.cols() || adapter.a.rows() == 0) {
    fail(ErrorCode::DimensionMismatch,
         "adapter A " + std::to_string(adapter.a.rows()) + "x" + std::to_string(adapter.a.cols()) +
             ", B " + std::to_string(adapter.b.rows()) + "x" + std::to_string(adapter.b.cols()) +
             " incompatible with encoder " + std::to_string(enc.weight.rows()) + "x" +
             std::to_string(enc.weight.cols()));
  }
}

Vector project(const Eigen::Ref<const Vector>& x, const LinearEncoder& enc,
               const LoraAdapter* adapter) {
  if (x.size() != enc.weight.cols()) {
    fail(ErrorCode::DimensionMismatch, "feature length " + std::to_string(x.size()) +
                                           " != encoder input " + std::to_string(enc.weight.cols()));
  }
  Vector v = enc.weight * x;
  if (adapter != nullptr) {
    check_compatible(enc, *adapter);
    v.noalias() += adapter->scale() * (adapter->b * (adapter->a * x));
  }
  return v;
}

Vector encode(const Eigen::Ref<const Vector>& x, const LinearEncoder& enc,
              const LoraAdapter* adapter) {
  Vector v = project(x, enc, adapter);
  const double norm = v.norm();
  if (!(norm >= kDegenerateNorm)) fail(ErrorCode::DegenerateOutput, "projected norm below 1e-12");
  return v / norm;
}

Vector encode(const FeatureVector& features, const LinearEncoder& enc, const LoraAdapter* adapter) {
  return encode(features.values, enc, adapter);
}

Vector encode_text_shared(std::string_view text, TextRole /*role*/, const LinearEncoder& enc,
                          const LoraAdapter* adapter) {
  return encode(text_features(text, enc.in_dim()), enc, adapter);
}

LinearEncoder lora_merge(const LinearEncoder& enc, const LoraAdapter& adapter) {
  check_compatible(enc, adapter);
  LinearEncoder merged;
  merged.weight = enc.weight + adapter.delta();
  merged.frozen = true;
  merged.init_seed = enc.init_seed;
  return merged;
}

BatchEncoding encode_batch(Matrix features, const LinearEncoder& enc, const LoraAdapter* adapter) {
  if (features.rows() != enc.weight.cols()) {
    fail(ErrorCode::DimensionMismatch, "feature length " + std::to_string(features.rows()) +
                                           " != encoder input " + std::to_string(enc.weight.cols()));
  }
  BatchEncoding out;
  out.features = std::move(features);
  out.projected.noalias() = (enc.weight * out.features).transpose();
  if (adapter != nullptr) {
    check_compatible(enc, *adapter);
    out.low_rank.noalias() = (adapter->a * out.features).transpose();
    out.projected.noalias() += adapter->scale() * (out.low_rank * adapter->b.transpose());
  }
  out.norms = out.projected.rowwise().norm();
  for (Eigen::Index i = 0; i < out.norms.size(); ++i) {
    if (!(out.norms[i] >= kDegenerateNorm)) {
      fail(ErrorCode::DegenerateOutput, "row " + std::to_string(i) + " projects to norm < 1e-12");
    }
  }
  out.unit = out.norms.cwiseInverse().asDiagonal() * out.projected;
  return out;
}

Matrix normalize_backward(const BatchEncoding& enc, const Eigen::Ref<const Matrix>& grad_unit) {
  const Vector radial = (enc.unit.array() * grad_unit.array()).rowwise().sum();
  Matrix tangent = grad_unit - radial.asDiagonal() * enc.unit;
  return enc.norms.cwiseInverse().asDiagonal() * tangent;
}

LoraGrad zero_grad_like(const LoraAdapter& adapter) {
  return {Matrix::Zero(adapter.a.rows(), adapter.a.cols()),
          Matrix::Zero(adapter.b.rows(), adapter.b.cols())};
}

void accumulate_lora_grad(const BatchEncoding& enc, const Eigen::Ref<const Matrix>& grad_projected,
                          const LoraAdapter& adapter, LoraGrad& out) {
  const double s = adapter.scale();
  out.b.noalias() += s * (grad_projected.transpose() * enc.low_rank);
  out.a.noalias() += s * ((grad_projected * adapter.b).transpose() * enc.features.transpose());
}

void accumulate_weight_grad(const BatchEncoding& enc,
                            const Eigen::Ref<const Matrix>& grad_projected, Matrix& out) {
  out.noalias() += grad_projected.transpose() * enc.features.transpose();
}

void snap_to_float32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

std::uint64_t weight_checksum(const Matrix& m) {
  std::uint64_t h = fnv1a64(std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  return fnv1a64(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size()))), h);
}

}  // namespace twinclip
