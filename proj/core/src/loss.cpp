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

#include "twinclip/loss.hpp"

#include <cmath>
#include <string>

#include "twinclip/error.hpp"

namespace twinclip {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0)) fail(ErrorCode::NonPositiveTau, "tau must be > 0, got " + std::to_string(tau));
}

void check_pair(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() == 0) fail(ErrorCode::DimensionMismatch, std::string(what) + ": empty batch");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::DimensionMismatch,
         std::string(what) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

/// Mean cross entropy of each row of [pos | neg] / tau against the diagonal
/// entry of `pos`. Writes dL/dpos and dL/dneg (w.r.t. similarities).
double diagonal_cross_entropy(const Matrix& pos, const Matrix* neg, double tau, Matrix& grad_pos,
                              Matrix* grad_neg) {
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index n = pos.rows();
  const Eigen::Index extra = neg != nullptr ? neg->cols() : 0;
  RowMatrix prob(n, pos.cols() + extra);
  prob.leftCols(pos.cols()) = pos / tau;
  if (neg != nullptr) prob.rightCols(extra) = *neg / tau;

  // One pass per row: the shifted exponentials give both the softmax and the
  // log-sum-exp.
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto row = prob.row(i);
    const double target = row(i);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    const double sum = row.sum();
    row /= sum;
    total += m + std::log(sum) - target;
  }
  const double inv = 1.0 / (static_cast<double>(n) * tau);
  grad_pos = prob.leftCols(pos.cols()) * inv;
  grad_pos.diagonal().array() -= inv;
  if (grad_neg != nullptr) *grad_neg = prob.rightCols(extra) * inv;
  return total / static_cast<double>(n);
}

void add_scaled(std::vector<Matrix>& into, std::size_t slot, const Matrix& g, double w) {
  if (into[slot].size() == 0) {
    into[slot] = w * g;
  } else {
    into[slot] += w * g;
  }
}

}  // namespace

void LossConfig::validate() const {
  check_tau(tau);
  if (!(lambda_caption >= 0.0) || !(lambda_concept >= 0.0) ||
      !(lambda_caption + lambda_concept > 0.0)) {
    fail(ErrorCode::InvalidArgument, "loss weights must be >= 0 with a positive sum");
  }
}

Matrix similarity(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::DimensionMismatch, "embedding widths differ: " + std::to_string(a.cols()) +
                                           " vs " + std::to_string(b.cols()));
  }
  return a * b.transpose();
}

Matrix row_softmax(const Eigen::Ref<const Matrix>& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

LossOutput clip_loss(const Matrix& image, const Matrix& text, double tau) {
  check_tau(tau);
  check_pair(image, text, "clip_loss");
  const Matrix s = similarity(image, text);
  Matrix g_rows;
  Matrix g_cols;
  const double i2t = diagonal_cross_entropy(s, nullptr, tau, g_rows, nullptr);
  const double t2i = diagonal_cross_entropy(s.transpose(), nullptr, tau, g_cols, nullptr);
  const Matrix g = g_rows + g_cols.transpose();

  LossOutput out;
  out.value = i2t + t2i;
  out.parts = {{"i2t", i2t}, {"t2i", t2i}};
  out.grads = {g * text, g.transpose() * image};
  return out;
}

LossOutput negclip_loss(const Matrix& image, const Matrix& text_pos, const Matrix& text_neg,
                        double tau) {
  check_tau(tau);
  check_pair(image, text_pos, "negclip_loss(image, text_pos)");
  check_pair(image, text_neg, "negclip_loss(image, text_neg)");
  const Matrix s_pos = similarity(image, text_pos);
  const Matrix s_neg = similarity(image, text_neg);
  Matrix g_pos;
  Matrix g_neg;
  Matrix g_cols;
  const double i2t = diagonal_cross_entropy(s_pos, &s_neg, tau, g_pos, &g_neg);
  const double t2i = diagonal_cross_entropy(s_pos.transpose(), nullptr, tau, g_cols, nullptr);
  g_pos += g_cols.transpose();

  LossOutput out;
  out.value = i2t + t2i;
  out.parts = {{"i2t_neg", i2t}, {"t2i", t2i}};
  out.grads = {g_pos * text_pos + g_neg * text_neg, g_pos.transpose() * image,
               g_neg.transpose() * image};
  return out;
}

LossOutput tripletclip_loss(const Matrix& image_pos, const Matrix& image_neg,
                            const Matrix& text_pos, const Matrix& text_neg, double tau) {
  const LossOutput fwd = negclip_loss(image_pos, text_pos, text_neg, tau);
  const LossOutput bwd = negclip_loss(image_neg, text_neg, text_pos, tau);
  LossOutput out;
  out.value = fwd.value + bwd.value;
  out.parts = {{"positive", fwd.value}, {"negative", bwd.value}};
  out.grads = {fwd.grads[0], bwd.grads[0], fwd.grads[1] + bwd.grads[2],
               fwd.grads[2] + bwd.grads[1]};
  return out;
}

LossOutput cultureclip_loss(const EmbeddingBatch& batch, const LossConfig& cfg) {
  cfg.validate();
  constexpr std::array<const char*, kRoleCount> names = {"image_pos",   "image_neg",
                                                         "caption_pos", "caption_neg",
                                                         "concept_pos", "concept_neg"};
  for (std::size_t r = 0; r < kRoleCount; ++r) {
    if (batch.roles[r].size() == 0) fail(ErrorCode::MissingRole, names[r]);
  }
  using R = Role;
  const LossOutput caption = tripletclip_loss(batch[R::ImagePos], batch[R::ImageNeg],
                                              batch[R::CaptionPos], batch[R::CaptionNeg], cfg.tau);
  const LossOutput concept_branch = tripletclip_loss(batch[R::ImagePos], batch[R::ImageNeg],
                                              batch[R::ConceptPos], batch[R::ConceptNeg], cfg.tau);

  LossOutput out;
  out.value = cfg.lambda_caption * caption.value + cfg.lambda_concept * concept_branch.value;
  out.parts = {{"caption", caption.value}, {"concept", concept_branch.value}};
  out.grads.resize(kRoleCount);
  const double wt = cfg.lambda_caption;
  const double wc = cfg.lambda_concept;
  add_scaled(out.grads, 0, caption.grads[0], wt);
  add_scaled(out.grads, 0, concept_branch.grads[0], wc);
  add_scaled(out.grads, 1, caption.grads[1], wt);
  add_scaled(out.grads, 1, concept_branch.grads[1], wc);
  add_scaled(out.grads, 2, caption.grads[2], wt);
  add_scaled(out.grads, 3, caption.grads[3], wt);
  add_scaled(out.grads, 4, concept_branch.grads[2], wc);
  add_scaled(out.grads, 5, concept_branch.grads[3], wc);
  return out;
}

}  // namespace twinclip
