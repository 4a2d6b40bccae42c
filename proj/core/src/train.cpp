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

#include "twinclip/train.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "twinclip/error.hpp"
#include "twinclip/evaluate.hpp"
#include "twinclip/hashing.hpp"

namespace twinclip {

namespace {

using nlohmann::json;

Matrix hcat(std::initializer_list<const Matrix*> blocks) {
  Eigen::Index cols = 0;
  for (const Matrix* b : blocks) cols += b->cols();
  Matrix out(blocks.begin()[0]->rows(), cols);
  Eigen::Index at = 0;
  for (const Matrix* b : blocks) {
    out.middleCols(at, b->cols()) = *b;
    at += b->cols();
  }
  return out;
}

void sgd_update(Matrix& param, const Matrix& grad, double lr, double weight_decay) {
  param -= lr * (grad + weight_decay * param);
  snap_to_float32(param);
}

std::string epoch_name(std::size_t epoch) {
  std::string digits = std::to_string(epoch);
  return "epoch_" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits + ".ckpt";
}

}  // namespace

std::string_view to_string(LossKind kind) noexcept {
  switch (kind) {
    case LossKind::Clip: return "clip";
    case LossKind::NegClip: return "negclip";
    case LossKind::TripletClip: return "tripletclip";
    case LossKind::CultureClip: return "cultureclip";
  }
  return "unknown";
}

std::optional<LossKind> parse_loss_kind(std::string_view name) noexcept {
  for (LossKind k : {LossKind::Clip, LossKind::NegClip, LossKind::TripletClip, LossKind::CultureClip}) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
  require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  require(base_lr > 0.0 && std::isfinite(base_lr), ErrorCode::InvalidArgument, "base_lr must be > 0");
  require(weight_decay >= 0.0, ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorCode::InvalidArgument,
          "holdout_fraction must lie in [0, 1)");
  require(!max_steps || *max_steps >= 1, ErrorCode::InvalidArgument, "max_steps must be >= 1");
  loss_config().validate();
}

json to_json(const TrainConfig& cfg) {
  json j{{"loss", to_string(cfg.loss_kind)},
         {"epochs", cfg.epochs},
         {"batch_size", cfg.batch_size},
         {"base_lr", cfg.base_lr},
         {"weight_decay", cfg.weight_decay},
         {"tau", cfg.tau},
         {"lambda_caption", cfg.lambda_caption},
         {"lambda_concept", cfg.lambda_concept},
         {"d", cfg.embed_dim},
         {"F", cfg.feature_dim},
         {"rank", cfg.rank},
         {"alpha", cfg.alpha > 0.0 ? cfg.alpha : static_cast<double>(cfg.rank)},
         {"seed", cfg.seed},
         {"holdout_fraction", cfg.holdout_fraction},
         {"full_finetune", cfg.full_finetune},
         {"checkpoint_dir", cfg.checkpoint_dir.string()}};
  j["max_steps"] = cfg.max_steps ? json(*cfg.max_steps) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& doc, TrainConfig cfg) {
  if (!doc.is_object()) fail(ErrorCode::ConfigError, "train config must be an object");
  try {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "loss") {
        auto kind = parse_loss_kind(v.get<std::string>());
        if (!kind) fail(ErrorCode::ConfigError, "train.loss: unknown loss '" + v.get<std::string>() + "'");
        cfg.loss_kind = *kind;
      } else if (key == "epochs") {
        cfg.epochs = v.get<std::size_t>();
      } else if (key == "batch_size") {
        cfg.batch_size = v.get<std::size_t>();
      } else if (key == "base_lr") {
        cfg.base_lr = v.get<double>();
      } else if (key == "weight_decay") {
        cfg.weight_decay = v.get<double>();
      } else if (key == "tau") {
        cfg.tau = v.get<double>();
      } else if (key == "lambda_caption") {
        cfg.lambda_caption = v.get<double>();
      } else if (key == "lambda_concept") {
        cfg.lambda_concept = v.get<double>();
      } else if (key == "d") {
        cfg.embed_dim = v.get<std::size_t>();
      } else if (key == "F") {
        cfg.feature_dim = v.get<std::size_t>();
      } else if (key == "rank") {
        cfg.rank = v.get<std::size_t>();
      } else if (key == "alpha") {
        cfg.alpha = v.get<double>();
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "holdout_fraction") {
        cfg.holdout_fraction = v.get<double>();
      } else if (key == "max_steps") {
        cfg.max_steps = v.is_null() ? std::nullopt : std::optional<std::size_t>(v.get<std::size_t>());
      } else if (key == "full_finetune") {
        cfg.full_finetune = v.get<bool>();
      } else if (key == "checkpoint_dir") {
        cfg.checkpoint_dir = v.get<std::string>();
      } else {
        fail(ErrorCode::ConfigError, "train: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("train: ") + e.what());
  }
  return cfg;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  require(total_steps >= 1, ErrorCode::InvalidArgument, "total_steps must be >= 1");
  require(step <= total_steps, ErrorCode::InvalidArgument, "step exceeds total_steps");
  if (step == 0) return base_lr;
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

BatchFeatures gather_features(std::span<const TwinCard> batch, FeatureResolver& features) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto f = static_cast<Eigen::Index>(features.dim());
  BatchFeatures out;
  for (auto& m : out.roles) m.resize(f, n);
  auto put = [&](Role role, Eigen::Index col, const FeatureVector& fv, const TwinCard& card,
                 const char* what) {
    if (fv.degenerate) {
      fail(ErrorCode::DegenerateBatch, "card '" + card.id + "': " + what + " has zero features");
    }
    out.roles[static_cast<std::size_t>(role)].col(col) = fv.values;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const TwinCard& c = batch[static_cast<std::size_t>(i)];
    put(Role::ImagePos, i, features.image(c.positive.image), c, "positive image");
    put(Role::ImageNeg, i, features.image(c.negative.image), c, "negative image");
    put(Role::CaptionPos, i, features.text(c.positive.caption), c, "positive caption");
    put(Role::CaptionNeg, i, features.text(c.negative.caption), c, "negative caption");
    put(Role::ConceptPos, i, features.text(c.positive.record.name), c, "positive concept");
    put(Role::ConceptNeg, i, features.text(c.negative.record.name), c, "negative concept");
  }
  return out;
}

BatchLoss batch_loss(const BatchFeatures& batch, const ModelState& state, const TrainConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto role = [&](Role r) -> const Matrix& { return batch.roles[static_cast<std::size_t>(r)]; };
  const bool with_concepts = cfg.loss_kind == LossKind::CultureClip;
  const LoraAdapter* image_adapter = cfg.full_finetune ? nullptr : &state.image_lora;
  const LoraAdapter* text_adapter = cfg.full_finetune ? nullptr : &state.text_lora;

  const BatchEncoding image =
      encode_batch(hcat({&role(Role::ImagePos), &role(Role::ImageNeg)}), state.base.image, image_adapter);
  const BatchEncoding text =
      with_concepts ? encode_batch(hcat({&role(Role::CaptionPos), &role(Role::CaptionNeg),
                                         &role(Role::ConceptPos), &role(Role::ConceptNeg)}),
                                   state.base.text, text_adapter)
                    : encode_batch(hcat({&role(Role::CaptionPos), &role(Role::CaptionNeg)}),
                                   state.base.text, text_adapter);

  EmbeddingBatch emb;
  emb[Role::ImagePos] = image.unit.topRows(n);
  emb[Role::ImageNeg] = image.unit.bottomRows(n);
  emb[Role::CaptionPos] = text.unit.middleRows(0, n);
  emb[Role::CaptionNeg] = text.unit.middleRows(n, n);
  if (with_concepts) {
    emb[Role::ConceptPos] = text.unit.middleRows(2 * n, n);
    emb[Role::ConceptNeg] = text.unit.middleRows(3 * n, n);
  }

  const Eigen::Index d = image.unit.cols();
  Matrix g_image = Matrix::Zero(2 * n, d);
  Matrix g_text = Matrix::Zero(text.unit.rows(), d);
  double value = 0.0;
  using R = Role;
  switch (cfg.loss_kind) {
    case LossKind::Clip: {
      const LossOutput pos = clip_loss(emb[R::ImagePos], emb[R::CaptionPos], cfg.tau);
      const LossOutput neg = clip_loss(emb[R::ImageNeg], emb[R::CaptionNeg], cfg.tau);
      value = pos.value + neg.value;
      g_image.topRows(n) = pos.grads[0];
      g_image.bottomRows(n) = neg.grads[0];
      g_text.middleRows(0, n) = pos.grads[1];
      g_text.middleRows(n, n) = neg.grads[1];
      break;
    }
    case LossKind::NegClip: {
      const LossOutput out = negclip_loss(emb[R::ImagePos], emb[R::CaptionPos], emb[R::CaptionNeg], cfg.tau);
      value = out.value;
      g_image.topRows(n) = out.grads[0];
      g_text.middleRows(0, n) = out.grads[1];
      g_text.middleRows(n, n) = out.grads[2];
      break;
    }
    case LossKind::TripletClip: {
      const LossOutput out = tripletclip_loss(emb[R::ImagePos], emb[R::ImageNeg], emb[R::CaptionPos],
                                              emb[R::CaptionNeg], cfg.tau);
      value = out.value;
      g_image.topRows(n) = out.grads[0];
      g_image.bottomRows(n) = out.grads[1];
      g_text.middleRows(0, n) = out.grads[2];
      g_text.middleRows(n, n) = out.grads[3];
      break;
    }
    case LossKind::CultureClip: {
      const LossOutput out = cultureclip_loss(emb, cfg.loss_config());
      value = out.value;
      g_image.topRows(n) = out.grads[0];
      g_image.bottomRows(n) = out.grads[1];
      for (std::size_t r = 2; r < kRoleCount; ++r) {
        g_text.middleRows(static_cast<Eigen::Index>(r - 2) * n, n) = out.grads[r];
      }
      break;
    }
  }

  BatchLoss result;
  result.value = value;
  const Matrix gv_image = normalize_backward(image, g_image);
  const Matrix gv_text = normalize_backward(text, g_text);
  if (cfg.full_finetune) {
    result.grad.image_weight = Matrix::Zero(state.base.image.weight.rows(), state.base.image.weight.cols());
    result.grad.text_weight = Matrix::Zero(state.base.text.weight.rows(), state.base.text.weight.cols());
    accumulate_weight_grad(image, gv_image, result.grad.image_weight);
    accumulate_weight_grad(text, gv_text, result.grad.text_weight);
  } else {
    result.grad.image = zero_grad_like(state.image_lora);
    result.grad.text = zero_grad_like(state.text_lora);
    accumulate_lora_grad(image, gv_image, state.image_lora, result.grad.image);
    accumulate_lora_grad(text, gv_text, state.text_lora, result.grad.text);
  }
  return result;
}

std::pair<ModelState, double> train_step(std::span<const TwinCard> batch, ModelState state,
                                         const TrainConfig& cfg, FeatureResolver& features,
                                         double lr) {
  const BatchFeatures feats = gather_features(batch, features);
  BatchLoss loss = batch_loss(feats, state, cfg);
  if (!std::isfinite(loss.value)) {
    fail(ErrorCode::NonFiniteLoss, "loss is " + std::to_string(loss.value) + " at step " +
                                       std::to_string(state.step));
  }
  if (cfg.full_finetune) {
    state.base.image.frozen = state.base.text.frozen = false;
    sgd_update(state.base.image.weight, loss.grad.image_weight, lr, cfg.weight_decay);
    sgd_update(state.base.text.weight, loss.grad.text_weight, lr, cfg.weight_decay);
  } else {
    sgd_update(state.image_lora.a, loss.grad.image.a, lr, cfg.weight_decay);
    sgd_update(state.image_lora.b, loss.grad.image.b, lr, cfg.weight_decay);
    sgd_update(state.text_lora.a, loss.grad.text.a, lr, cfg.weight_decay);
    sgd_update(state.text_lora.b, loss.grad.text.b, lr, cfg.weight_decay);
  }
  const bool finite = state.image_lora.a.allFinite() && state.image_lora.b.allFinite() &&
                      state.text_lora.a.allFinite() && state.text_lora.b.allFinite() &&
                      state.base.image.weight.allFinite() && state.base.text.weight.allFinite();
  if (!finite) {
    fail(ErrorCode::NonFiniteLoss, "parameters diverged at step " + std::to_string(state.step));
  }
  ++state.step;
  return {std::move(state), loss.value};
}

json to_json(const HeldOutMetrics& m) {
  return json{{"concept_ranking_accuracy", m.concept_ranking_accuracy},
              {"caption_recall_i2t", m.caption_recall_i2t},
              {"caption_recall_t2i", m.caption_recall_t2i},
              {"caption_recall_mean", m.caption_recall_mean},
              {"cards", m.cards}};
}

HeldOutMetrics held_out_metrics(const ModelState& state, std::span<const TwinCard> cards,
                                FeatureResolver& features, std::size_t k) {
  HeldOutMetrics m;
  m.cards = cards.size();
  if (cards.empty()) return m;
  EncoderModel model(state, features);
  const auto items = concept_ranking_items(cards);
  m.concept_ranking_accuracy = ranking_accuracy(model, items);
  const RetrievalSet set = caption_retrieval_set(cards);
  const RecallPair recall = bidirectional_recall(model, set, std::min(k, set.images.size()));
  m.caption_recall_i2t = recall.image_to_text;
  m.caption_recall_t2i = recall.text_to_image;
  m.caption_recall_mean = recall.mean();
  return m;
}

json to_json(const TrainReport& r) {
  json j{{"epoch_mean_loss", r.epoch_mean_loss},
         {"steps", r.steps},
         {"train_cards", r.train_cards},
         {"held_out_cards", r.held_out_cards},
         {"excluded_cards", r.excluded_cards},
         {"best_epoch", r.best_epoch},
         {"wall_clock_seconds", r.wall_clock_seconds}};
  j["initial"] = r.initial ? to_json(*r.initial) : json(nullptr);
  j["final"] = r.final_metrics ? to_json(*r.final_metrics) : json(nullptr);
  j["best"] = r.best ? to_json(*r.best) : json(nullptr);
  return j;
}

FitResult fit(std::span<const TwinCard> dataset, const TrainConfig& cfg, FeatureResolver& features,
              const std::function<void(std::size_t, double)>& on_epoch) {
  cfg.validate();
  require(features.dim() == cfg.feature_dim, ErrorCode::DimensionMismatch,
          "feature resolver dim differs from config F");
  const auto started = std::chrono::steady_clock::now();

  FitResult result;
  TrainReport& report = result.report;
  std::vector<TwinCard> train;
  std::vector<TwinCard> held_out;
  for (const TwinCard& card : dataset) {
    bool degenerate = false;
    for (const Triplet* t : {&card.positive, &card.negative}) {
      degenerate = degenerate || features.image(t->image).degenerate ||
                   features.text(t->caption).degenerate || features.text(t->record.name).degenerate;
    }
    if (degenerate) {
      ++report.excluded_cards;
      continue;
    }
    (is_held_out(card.id, cfg.seed, cfg.holdout_fraction) ? held_out : train).push_back(card);
  }
  report.train_cards = train.size();
  report.held_out_cards = held_out.size();
  if (train.empty()) fail(ErrorCode::EmptyDataset, "no training cards after split");

  BatchSampler sampler(train.size(), cfg.batch_size, derive_seed(cfg.seed, "train/batches"));
  std::size_t total_steps = cfg.epochs * sampler.batches_per_epoch();
  if (cfg.max_steps) total_steps = std::min(total_steps, *cfg.max_steps);

  ModelState state = init_model(cfg.model_shape(), cfg.seed);
  if (cfg.full_finetune) state.base.image.frozen = state.base.text.frozen = false;

  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  if (!held_out.empty()) {
    report.initial = held_out_metrics(state, held_out, features);
    report.best = report.initial;
  }
  result.best_state = state;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < total_steps; ++epoch) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& indices : sampler.epoch(epoch)) {
      if (step >= total_steps) break;
      std::vector<TwinCard> batch;
      batch.reserve(indices.size());
      for (std::size_t i : indices) batch.push_back(train[i]);
      const double lr = cosine_lr(step, total_steps, cfg.base_lr);
      auto [next, loss] = train_step(batch, std::move(state), cfg, features, lr);
      state = std::move(next);
      report.step_loss.push_back(loss);
      sum += loss;
      ++count;
      ++step;
    }
    const double mean = sum / static_cast<double>(count);
    report.epoch_mean_loss.push_back(mean);

    bool improved = held_out.empty();
    if (!held_out.empty()) {
      HeldOutMetrics m = held_out_metrics(state, held_out, features);
      if (m.concept_ranking_accuracy > report.best->concept_ranking_accuracy) {
        improved = true;
        report.best = m;
      }
      report.final_metrics = m;
    }
    if (improved) {
      result.best_state = state;
      report.best_epoch = epoch + 1;
    }
    if (!cfg.checkpoint_dir.empty()) {
      save_checkpoint(state, cfg.checkpoint_dir / epoch_name(epoch + 1));
      save_checkpoint(state, cfg.checkpoint_dir / "last.ckpt");
      if (improved) save_checkpoint(state, cfg.checkpoint_dir / "best.ckpt");
    }
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  if (!cfg.checkpoint_dir.empty() && !std::filesystem::exists(cfg.checkpoint_dir / "best.ckpt")) {
    save_checkpoint(result.best_state, cfg.checkpoint_dir / "best.ckpt");
  }
  report.steps = step;
  result.final_state = std::move(state);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  return m;
}

Matrix random_unit_rows(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng) {
  Matrix m = random_matrix(n, d, 1.0, rng);
  m.rowwise().normalize();
  return m;
}

}  // namespace

GradCheckResult check_loss_gradients(LossKind kind, std::size_t n, std::size_t d,
                                     std::uint64_t seed, double eps, const LossConfig& cfg) {
  require(n >= 1 && d >= 1, ErrorCode::InvalidArgument, "n and d must be positive");
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "gradcheck/loss"));
  const auto N = static_cast<Eigen::Index>(n);
  const auto D = static_cast<Eigen::Index>(d);
  const std::size_t arity = kind == LossKind::Clip      ? 2
                            : kind == LossKind::NegClip ? 3
                            : kind == LossKind::TripletClip ? 4
                                                            : kRoleCount;
  std::vector<Matrix> inputs;
  for (std::size_t i = 0; i < arity; ++i) inputs.push_back(random_unit_rows(N, D, rng));
  const LossFn loss = [&](const std::vector<Matrix>& x) {
    switch (kind) {
      case LossKind::Clip: return clip_loss(x[0], x[1], cfg.tau);
      case LossKind::NegClip: return negclip_loss(x[0], x[1], x[2], cfg.tau);
      case LossKind::TripletClip: return tripletclip_loss(x[0], x[1], x[2], x[3], cfg.tau);
      case LossKind::CultureClip: break;
    }
    EmbeddingBatch batch;
    for (std::size_t r = 0; r < kRoleCount; ++r) batch.roles[r] = x[r];
    return cultureclip_loss(batch, cfg);
  };
  return grad_check(loss, inputs, eps);
}

GradCheckResult check_chain_gradients(LossKind kind, std::size_t n, std::size_t d,
                                      std::size_t feature_dim, std::size_t rank,
                                      std::uint64_t seed, double eps) {
  TrainConfig cfg;
  cfg.loss_kind = kind;
  cfg.embed_dim = d;
  cfg.feature_dim = feature_dim;
  cfg.rank = rank;
  cfg.batch_size = n;
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "gradcheck/chain"));
  ModelState state = init_model(cfg.model_shape(), seed);
  const auto D = static_cast<Eigen::Index>(d);
  const auto R = static_cast<Eigen::Index>(rank);
  state.image_lora.b = random_matrix(D, R, 0.1, rng);
  state.text_lora.b = random_matrix(D, R, 0.1, rng);

  BatchFeatures batch;
  for (auto& role : batch.roles) {
    role = random_matrix(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(n), 1.0, rng);
    role.colwise().normalize();
  }
  auto with = [&](const std::vector<Matrix>& x) {
    ModelState s = state;
    s.image_lora.a = x[0];
    s.image_lora.b = x[1];
    s.text_lora.a = x[2];
    s.text_lora.b = x[3];
    return s;
  };
  const std::vector<Matrix> inputs = {state.image_lora.a, state.image_lora.b, state.text_lora.a,
                                      state.text_lora.b};
  const BatchLoss at = batch_loss(batch, state, cfg);
  const std::vector<Matrix> analytic = {at.grad.image.a, at.grad.image.b, at.grad.text.a,
                                        at.grad.text.b};
  return grad_check([&](const std::vector<Matrix>& x) { return batch_loss(batch, with(x), cfg).value; },
                    inputs, analytic, eps);
}

}  // namespace twinclip
