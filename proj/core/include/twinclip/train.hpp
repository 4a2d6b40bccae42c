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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "twinclip/featurize.hpp"
#include "twinclip/gradcheck.hpp"
#include "twinclip/loss.hpp"
#include "twinclip/model.hpp"
#include "twinclip/twin_data.hpp"

namespace twinclip {

/// Which objective a run optimizes, and over which Twin Card roles:
///   Clip        clip(I+,T+) + clip(I-,T-): captions only, twins never share a softmax
///   NegClip     negclip(I+,T+,T-)
///   TripletClip negclip(I+,T+,T-) + negclip(I-,T-,T+)
///   CultureClip caption and concept branches, weighted by lambda
enum class LossKind { Clip, NegClip, TripletClip, CultureClip };

std::string_view to_string(LossKind kind) noexcept;
std::optional<LossKind> parse_loss_kind(std::string_view name) noexcept;

// Full-scale provenance for the defaults below: global batch 2048, lr 3e-6,
// weight decay 0.1, 10 epochs, cosine schedule, LoRA rank 4 (or 8) on both
// encoders of a ViT-B/32 CLIP. Linear toy encoders need the larger lr and
// smaller batch used here.
struct TrainConfig {
  LossKind loss_kind = LossKind::CultureClip;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double base_lr = 1e-2;
  double weight_decay = 0.1;
  double tau = 0.07;
  double lambda_caption = 0.3;
  double lambda_concept = 0.7;
  std::size_t embed_dim = 64;
  std::size_t feature_dim = kDefaultFeatureDim;
  std::size_t rank = 4;
  double alpha = 0.0;  // <= 0 means alpha = rank
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  std::optional<std::size_t> max_steps;  // caps epochs * batches_per_epoch
  bool full_finetune = false;            // train base weights instead of adapters
  std::filesystem::path checkpoint_dir;  // empty: no files written

  void validate() const;
  LossConfig loss_config() const { return {tau, lambda_caption, lambda_concept}; }
  ModelShape model_shape() const { return {embed_dim, feature_dim, rank, alpha}; }
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays `doc` on `base`; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

/// base_lr * (1 + cos(pi * step / total_steps)) / 2, exact at both ends.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

/// Feature columns (F x N) for the six roles of a batch of cards.
struct BatchFeatures {
  std::array<Matrix, kRoleCount> roles;
  std::size_t size() const noexcept { return static_cast<std::size_t>(roles[0].cols()); }
};

/// Throws DegenerateBatch if any item featurizes to the zero vector.
BatchFeatures gather_features(std::span<const TwinCard> batch, FeatureResolver& features);

struct ModelGrad {
  LoraGrad image;
  LoraGrad text;
  Matrix image_weight;  // only for full fine-tuning
  Matrix text_weight;
};

struct BatchLoss {
  double value = 0.0;
  ModelGrad grad;
};

/// Loss of `kind` on the batch plus gradients w.r.t. the trainable parameters
/// (adapters, or base weights when `full_finetune`).
BatchLoss batch_loss(const BatchFeatures& batch, const ModelState& state, const TrainConfig& cfg);

/// One SGD step with decoupled weight decay on the trainable parameters:
/// theta <- theta - lr * (grad + weight_decay * theta). Returns the loss
/// measured before the update.
std::pair<ModelState, double> train_step(std::span<const TwinCard> batch, ModelState state,
                                         const TrainConfig& cfg, FeatureResolver& features,
                                         double lr);

struct HeldOutMetrics {
  double concept_ranking_accuracy = 0.0;
  double caption_recall_i2t = 0.0;
  double caption_recall_t2i = 0.0;
  double caption_recall_mean = 0.0;
  std::size_t cards = 0;
};

nlohmann::json to_json(const HeldOutMetrics& m);

/// Twin concept ranking and caption Recall@k (k clamped to the pair count)
/// on `cards` under the merged model.
HeldOutMetrics held_out_metrics(const ModelState& state, std::span<const TwinCard> cards,
                                FeatureResolver& features, std::size_t k = 5);

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::vector<double> step_loss;
  std::optional<HeldOutMetrics> initial;
  std::optional<HeldOutMetrics> final_metrics;
  std::optional<HeldOutMetrics> best;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  std::size_t train_cards = 0;
  std::size_t held_out_cards = 0;
  std::size_t excluded_cards = 0;
  double wall_clock_seconds = 0.0;
};

nlohmann::json to_json(const TrainReport& report);

struct FitResult {
  ModelState final_state;
  ModelState best_state;
  TrainReport report;
};

/// Splits off the held-out cards, excludes cards with degenerate features,
/// and runs cosine-scheduled SGD. When `cfg.checkpoint_dir` is set,
/// epoch_NNN.ckpt, last.ckpt and best.ckpt (by held-out concept ranking
/// accuracy) are written there. `on_epoch` receives the 1-based epoch and its
/// mean loss.
FitResult fit(std::span<const TwinCard> dataset, const TrainConfig& cfg, FeatureResolver& features,
              const std::function<void(std::size_t, double)>& on_epoch = {});

/// Finite-difference check of the standalone loss for `kind` (clip, negclip,
/// tripletclip or the full cultureclip objective) on random unit embeddings.
GradCheckResult check_loss_gradients(LossKind kind, std::size_t n, std::size_t d,
                                     std::uint64_t seed, double eps, const LossConfig& cfg = {});

/// Same check through the whole chain: random features, base plus adapter
/// projection, normalization and the training objective for `kind`. The
/// adapters' B factors are randomized so both A and B receive gradient.
GradCheckResult check_chain_gradients(LossKind kind, std::size_t n, std::size_t d,
                                      std::size_t feature_dim, std::size_t rank,
                                      std::uint64_t seed, double eps);

}  // namespace twinclip
