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


// twinclip: curate, embed, train, eval, inspect and gradcheck from one binary.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "twinclip/backend.hpp"
#include "twinclip/curate.hpp"
#include "twinclip/error.hpp"
#include "twinclip/evaluate.hpp"
#include "twinclip/featurize.hpp"
#include "twinclip/model.hpp"
#include "twinclip/train.hpp"
#include "twinclip/twin_data.hpp"

namespace {

using namespace twinclip;
using namespace twinclip::cli;
using nlohmann::json;
namespace fs = std::filesystem;

struct Globals {
  bool json_out = false;
  std::optional<fs::path> config;
};

void log(const std::string& message) { std::cerr << "[twinclip] " << message << '\n'; }

void log_config(std::string_view command, const json& resolved) {
  log(std::string(command) + " config " + resolved.dump());
}

void emit(const Globals& g, const json& result, const std::string& human) {
  if (g.json_out) {
    std::cout << result.dump() << '\n';
  } else {
    std::cout << human;
  }
}

std::optional<EmbeddingCache> load_cache(const std::optional<fs::path>& explicit_path,
                                         const fs::path& dataset) {
  const auto path = explicit_path ? explicit_path : default_cache_for(dataset);
  if (!path) return std::nullopt;
  log("image cache " + path->string());
  return EmbeddingCache::load(*path);
}

// curate ---------------------------------------------------------------------

struct CurateArgs {
  fs::path out;
  std::optional<std::string> backend;
  std::optional<std::string> judge;
  std::optional<std::string> endpoint;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> corpus;
  std::optional<std::size_t> captions;
  std::optional<std::size_t> concurrency;
  std::vector<std::string> countries;
};

int cmd_curate(const Globals& g, const CurateArgs& a) {
  RunConfig run = load_run_config(g.config);
  PipelineConfig& cfg = run.curate;
  if (a.backend) {
    require(*a.backend == "mock" || *a.backend == "http", ErrorCode::ConfigError,
            "--backend must be mock or http");
    cfg.backend = *a.backend == "mock" ? BackendKind::Mock : BackendKind::Http;
  }
  if (a.judge) {
    auto mode = parse_judge_mode(*a.judge);
    require(mode.has_value(), ErrorCode::ConfigError, "--judge must be constant, hashed or reject_all");
    cfg.mock_judge = *mode;
  }
  if (a.endpoint) cfg.endpoint = *a.endpoint;
  if (a.seed) cfg.seed = *a.seed;
  if (a.corpus) cfg.corpus = *a.corpus;
  if (a.captions) cfg.captions_per_concept = *a.captions;
  if (a.concurrency) cfg.concurrency = *a.concurrency;
  if (!a.countries.empty()) cfg.countries = a.countries;
  cfg.validate();
  log_config("curate", to_json(cfg));

  std::vector<RawCandidate> candidates;
  if (!cfg.corpus.empty()) candidates = load_candidates(cfg.corpus);
  auto backend = make_backend(cfg, a.out);
  const PipelineResult result = run_pipeline(cfg, *backend, candidates);
  for (const auto& w : result.warnings) log("warning: " + w);
  write_pipeline_outputs(result, a.out);

  const json summary = to_json(result.summary);
  char line[160];
  std::snprintf(line, sizeof line, "cards %zu  evaluated %zu  retained %zu  pass %.2f%%\n",
                result.cards.size(), result.summary.evaluated(), result.summary.retained(),
                100.0 * result.summary.pass_rate());
  emit(g, {{"out", a.out.string()}, {"summary", summary}}, line);
  if (!result.cards.empty()) return kOk;
  return result.backend_failures > 0 ? kBackendFailure : kEmptyOutput;
}

// embed ----------------------------------------------------------------------

struct EmbedArgs {
  fs::path dataset;
  fs::path out;
  std::optional<fs::path> cache;
  std::optional<fs::path> checkpoint;
  std::size_t feature_dim = kDefaultFeatureDim;
};

int cmd_embed(const Globals& g, const EmbedArgs& a) {
  const Dataset data = load_dataset(a.dataset);
  const auto cache = load_cache(a.cache, a.dataset);
  std::optional<ModelState> state;
  if (a.checkpoint) state = load_checkpoint(*a.checkpoint);
  const std::size_t feature_dim = state ? state->feature_dim() : a.feature_dim;
  log_config("embed", {{"dataset", a.dataset.string()},
                       {"out", a.out.string()},
                       {"checkpoint", a.checkpoint ? a.checkpoint->string() : ""},
                       {"feature_dim", feature_dim}});
  FeatureResolver resolver(feature_dim, cache ? &*cache : nullptr, a.dataset.parent_path());

  // Without a checkpoint the output is an image feature cache usable by
  // train/eval; with one it holds model embeddings of images and captions.
  std::size_t degenerate = 0;
  EmbeddingCache out(state ? state->embed_dim() : feature_dim);
  std::optional<EncoderModel> model;
  if (state) model.emplace(*state, resolver);
  for (const TwinCard& card : data.cards) {
    for (const Triplet* t : {&card.positive, &card.negative}) {
      if (model) {
        try {
          if (!out.contains("image:" + t->image)) out.insert("image:" + t->image, model->embed_image(t->image));
          if (!out.contains("text:" + t->caption)) out.insert("text:" + t->caption, model->embed_text(t->caption));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateItem) throw;
          ++degenerate;
        }
        continue;
      }
      std::string key = t->image.starts_with(kCachePrefix) ? t->image.substr(kCachePrefix.size()) : t->image;
      if (out.contains(key)) continue;
      const FeatureVector& f = resolver.image(t->image);
      if (f.degenerate) {
        ++degenerate;
        continue;
      }
      out.insert(std::move(key), f.values);
    }
  }
  out.save(a.out);
  emit(g, {{"out", a.out.string()}, {"entries", out.size()}, {"dim", out.dim()}, {"degenerate", degenerate}},
       "wrote " + std::to_string(out.size()) + " vectors (dim " + std::to_string(out.dim()) + ") to " +
           a.out.string() + "\n");
  return kOk;
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  fs::path dataset;
  std::optional<fs::path> out;
  std::optional<fs::path> cache;
  std::optional<std::string> loss;
  std::optional<std::size_t> rank;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch;
  std::optional<double> lr;
  std::optional<std::size_t> max_steps;
  bool full_finetune = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  RunConfig run = load_run_config(g.config);
  TrainConfig& cfg = run.train;
  if (a.loss) {
    auto kind = parse_loss_kind(*a.loss);
    require(kind.has_value(), ErrorCode::ConfigError,
            "--loss must be clip, negclip, tripletclip or cultureclip, got '" + *a.loss + "'");
    cfg.loss_kind = *kind;
  }
  if (a.rank) cfg.rank = *a.rank;
  if (a.seed) cfg.seed = *a.seed;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch) cfg.batch_size = *a.batch;
  if (a.lr) cfg.base_lr = *a.lr;
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  if (a.full_finetune) cfg.full_finetune = true;
  if (a.out) cfg.checkpoint_dir = *a.out;
  require(!cfg.checkpoint_dir.empty(), ErrorCode::ConfigError,
          "no output directory: pass --out or set train.checkpoint_dir");
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, e.detail());
  }
  log_config("train", to_json(cfg));

  const Dataset data = load_dataset(a.dataset);
  const auto cache = load_cache(a.cache, a.dataset);
  FeatureResolver resolver(cfg.feature_dim, cache ? &*cache : nullptr, a.dataset.parent_path());
  fs::create_directories(cfg.checkpoint_dir);

  std::ostream& table = g.json_out ? std::cerr : std::cout;
  table << "epoch  mean_loss\n";
  const FitResult fit_result = fit(data.cards, cfg, resolver, [&](std::size_t epoch, double loss) {
    char row[64];
    std::snprintf(row, sizeof row, "%5zu  %.6f\n", epoch, loss);
    table << row << std::flush;
  });
  const json report = to_json(fit_result.report);
  atomic_write(cfg.checkpoint_dir / "report.json", report.dump(2) + "\n");
  atomic_write(cfg.checkpoint_dir / "config.json", to_json(cfg).dump(2) + "\n");

  std::string human;
  if (fit_result.report.final_metrics) {
    char line[200];
    std::snprintf(line, sizeof line,
                  "steps %zu  held-out concept accuracy %.3f  caption recall %.3f  (%.2fs)\n",
                  fit_result.report.steps, fit_result.report.final_metrics->concept_ranking_accuracy,
                  fit_result.report.final_metrics->caption_recall_mean,
                  fit_result.report.wall_clock_seconds);
    human = line;
  }
  human += "checkpoints in " + cfg.checkpoint_dir.string() + "\n";
  emit(g, {{"checkpoint_dir", cfg.checkpoint_dir.string()}, {"report", report}}, human);
  return kOk;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint;
  std::optional<fs::path> suite;
  std::optional<fs::path> dataset;
  std::optional<fs::path> cache;
  std::optional<fs::path> base_dir;
  std::size_t k = 5;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  RunConfig run = load_run_config(g.config);
  std::optional<SuiteConfig> suite = run.eval;
  if (a.suite) {
    std::ifstream in(*a.suite);
    require(in.good(), ErrorCode::IoFailure, "cannot open suite " + a.suite->string());
    const json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded(), ErrorCode::ConfigError, a.suite->string() + ": malformed JSON");
    suite = parse_suite_config(doc, a.suite->parent_path());
  }
  require(suite.has_value() || a.dataset.has_value(), ErrorCode::ConfigError,
          "nothing to evaluate: pass --suite, --dataset or an eval config section");

  const ModelState state = load_checkpoint(a.checkpoint);
  std::optional<EmbeddingCache> cache;
  if (a.cache) {
    cache = EmbeddingCache::load(*a.cache);
  } else if (a.dataset) {
    cache = load_cache(std::nullopt, *a.dataset);
  }
  const fs::path base = a.base_dir ? *a.base_dir : (a.dataset ? a.dataset->parent_path() : fs::path{});
  FeatureResolver resolver(state.feature_dim(), cache ? &*cache : nullptr, base);
  EncoderModel model(state, resolver);
  log_config("eval", {{"checkpoint", a.checkpoint.string()},
                      {"suite", a.suite ? a.suite->string() : ""},
                      {"dataset", a.dataset ? a.dataset->string() : ""},
                      {"k", a.k}});

  EvalReport report = suite ? eval_report(model, *suite, a.checkpoint.filename().string())
                            : EvalReport{a.checkpoint.filename().string(), {}, {}};
  if (a.dataset) {
    const Dataset data = load_dataset(*a.dataset);
    const auto items = concept_ranking_items(data.cards);
    report.ranking["twin_concepts"] = {ranking_accuracy(model, items), items.size()};
    const RetrievalSet set = caption_retrieval_set(data.cards);
    const std::size_t k = std::min(a.k, set.images.size());
    report.retrieval["caption_retrieval"] = {k, set.images.size(), bidirectional_recall(model, set, k)};
  }
  std::string human;
  for (const auto& [name, r] : report.ranking) {
    char line[160];
    std::snprintf(line, sizeof line, "%-24s accuracy %.4f  (%zu items)\n", name.c_str(), r.accuracy, r.items);
    human += line;
  }
  for (const auto& [name, r] : report.retrieval) {
    char line[200];
    std::snprintf(line, sizeof line, "%-24s R@%zu i2t %.4f  t2i %.4f  (%zu pairs)\n", name.c_str(), r.k,
                  r.recall.image_to_text, r.recall.text_to_image, r.pairs);
    human += line;
  }
  emit(g, to_json(report), human);
  return kOk;
}

// inspect --------------------------------------------------------------------

int cmd_inspect(const Globals& g, const fs::path& dataset, std::size_t head, bool lenient) {
  const Dataset data = load_dataset(dataset, lenient ? ParseMode::Lenient : ParseMode::Strict);
  json cards = json::array();
  for (std::size_t i = 0; i < std::min(head, data.cards.size()); ++i) cards.push_back(to_json(data.cards[i]));
  json skipped = json::array();
  for (const auto& s : data.skipped) skipped.push_back({{"line", s.line}, {"message", s.message}});
  const json stats = to_json(data.stats);

  std::string human = "cards " + std::to_string(data.stats.card_count) + "\n";
  char line[96];
  std::snprintf(line, sizeof line, "mean caption words %.2f\n", data.stats.mean_caption_words);
  human += line;
  for (const auto& [c, n] : data.stats.per_category_counts) {
    human += "  " + std::string(category_name(c)) + ": " + std::to_string(n) + "\n";
  }
  for (const auto& s : data.skipped) human += "skipped line " + std::to_string(s.line) + ": " + s.message + "\n";
  for (const auto& c : cards) human += c.dump() + "\n";
  emit(g, {{"stats", stats}, {"head", cards}, {"skipped", skipped}}, human);
  return kOk;
}

// gradcheck ------------------------------------------------------------------

struct GradArgs {
  std::string loss = "cultureclip";
  std::size_t n = 4;
  std::size_t d = 8;
  std::size_t feature_dim = 32;
  std::size_t rank = 4;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  double eps = 1e-5;
};

inline constexpr double kGradTolerance = 1e-4;

int cmd_gradcheck(const Globals& g, const GradArgs& a) {
  const auto kind = parse_loss_kind(a.loss);
  require(kind.has_value(), ErrorCode::ConfigError, "--loss must be clip, negclip, tripletclip or cultureclip");
  require(a.trials >= 1, ErrorCode::ConfigError, "--trials must be at least 1");
  log_config("gradcheck", {{"loss", a.loss}, {"n", a.n}, {"d", a.d}, {"feature_dim", a.feature_dim},
                           {"rank", a.rank}, {"trials", a.trials}, {"seed", a.seed}, {"eps", a.eps}});
  double loss_err = 0.0;
  double chain_err = 0.0;
  std::size_t coords = 0;
  for (std::size_t t = 0; t < a.trials; ++t) {
    const auto l = check_loss_gradients(*kind, a.n, a.d, a.seed + t, a.eps);
    const auto c = check_chain_gradients(*kind, a.n, a.d, a.feature_dim, a.rank, a.seed + t, a.eps);
    loss_err = std::max(loss_err, l.max_relative_error);
    chain_err = std::max(chain_err, c.max_relative_error);
    coords += l.coordinates + c.coordinates;
  }
  const bool ok = loss_err < kGradTolerance && chain_err < kGradTolerance;
  char line[200];
  std::snprintf(line, sizeof line, "%s  loss %.3e  chain %.3e  (%zu coordinates, tolerance %.0e)  %s\n",
                a.loss.c_str(), loss_err, chain_err, coords, kGradTolerance, ok ? "ok" : "FAILED");
  emit(g, {{"loss", a.loss}, {"loss_max_relative_error", loss_err}, {"chain_max_relative_error", chain_err},
           {"coordinates", coords}, {"tolerance", kGradTolerance}, {"ok", ok}},
       line);
  return ok ? kOk : kGradCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Culturally aware contrastive fine-tuning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(
      "Exit codes: 0 success, 1 gradcheck failure, 2 config or I/O error, 3 backend failure,\n"
      "4 empty output, 5 non-finite loss.");
  Globals g;
  app.add_flag("--json", g.json_out, "Print a single JSON object on stdout");
  app.add_option("--config", g.config, "Run config JSON with curate/train/eval sections")
      ->check(CLI::ExistingFile);

  CurateArgs curate;
  auto* c = app.add_subcommand("curate", "Run the twin-card curation pipeline");
  c->add_option("--out", curate.out, "Output directory")->required();
  c->add_option("--backend", curate.backend, "mock or http");
  c->add_option("--judge", curate.judge, "Mock judge: constant, hashed or reject_all");
  c->add_option("--endpoint", curate.endpoint, "HTTP backend URL (default: $BACKEND_URL)");
  c->add_option("--seed", curate.seed, "Run seed");
  c->add_option("--corpus", curate.corpus, "Bottom-up candidate JSONL")->check(CLI::ExistingFile);
  c->add_option("--captions", curate.captions, "Captions per concept");
  c->add_option("--concurrency", curate.concurrency, "Concurrent items");
  c->add_option("--country", curate.countries, "Top-down country (repeatable)");

  EmbedArgs embed;
  auto* e = app.add_subcommand("embed", "Featurize or embed a dataset into a vector cache");
  e->add_option("dataset", embed.dataset, "Twin-card JSONL")->required();
  e->add_option("--out", embed.out, "Output cache file")->required();
  e->add_option("--cache", embed.cache, "Image cache for cache: refs");
  e->add_option("--checkpoint", embed.checkpoint, "Embed with this model instead of raw features");
  e->add_option("--feature-dim", embed.feature_dim, "Feature dimension without a checkpoint");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fine-tune LoRA adapters on a twin-card dataset");
  t->add_option("dataset", train.dataset, "Twin-card JSONL")->required();
  t->add_option("--out", train.out, "Checkpoint directory");
  t->add_option("--cache", train.cache, "Image cache (default: images.cache beside the dataset)");
  t->add_option("--loss", train.loss, "clip, negclip, tripletclip or cultureclip");
  t->add_option("--rank", train.rank, "LoRA rank");
  t->add_option("--seed", train.seed, "Run seed");
  t->add_option("--epochs", train.epochs, "Epochs");
  t->add_option("--batch", train.batch, "Batch size");
  t->add_option("--lr", train.lr, "Base learning rate");
  t->add_option("--max-steps", train.max_steps, "Step cap");
  t->add_flag("--full-finetune", train.full_finetune, "Train base weights instead of adapters");

  EvalArgs eval;
  auto* v = app.add_subcommand("eval", "Evaluate a checkpoint");
  v->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  v->add_option("--suite", eval.suite, "Suite config JSON");
  v->add_option("--dataset", eval.dataset, "Twin-card JSONL for twin ranking and caption retrieval");
  v->add_option("--cache", eval.cache, "Image cache");
  v->add_option("--base-dir", eval.base_dir, "Directory that raster paths are relative to");
  v->add_option("--k", eval.k, "Recall cutoff for --dataset");

  fs::path inspect_path;
  std::size_t head = 3;
  bool lenient = false;
  auto* i = app.add_subcommand("inspect", "Print dataset statistics and the first cards");
  i->add_option("dataset", inspect_path, "Twin-card JSONL")->required();
  i->add_option("--head", head, "Cards to print");
  i->add_flag("--lenient", lenient, "Skip malformed lines instead of failing");

  GradArgs grad;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--loss", grad.loss, "clip, negclip, tripletclip or cultureclip");
  gc->add_option("--n", grad.n, "Batch size");
  gc->add_option("--d", grad.d, "Embedding dimension");
  gc->add_option("--feature-dim", grad.feature_dim, "Feature dimension for the chain check");
  gc->add_option("--rank", grad.rank, "LoRA rank for the chain check");
  gc->add_option("--trials", grad.trials, "Random trials");
  gc->add_option("--seed", grad.seed, "Seed");
  gc->add_option("--eps", grad.eps, "Finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfigOrIo;
  }

  try {
    if (*c) return cmd_curate(g, curate);
    if (*e) return cmd_embed(g, embed);
    if (*t) return cmd_train(g, train);
    if (*v) return cmd_eval(g, eval);
    if (*i) return cmd_inspect(g, inspect_path, head, lenient);
    if (*gc) return cmd_gradcheck(g, grad);
  } catch (const Error& err) {
    log(std::string("error: ") + err.what());
    return exit_code_for(err.code());
  } catch (const std::exception& err) {
    log(std::string("error: ") + err.what());
    return kConfigOrIo;
  }
  return kConfigOrIo;
}
