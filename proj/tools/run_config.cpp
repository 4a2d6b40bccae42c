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


#include "run_config.hpp"

#include <fstream>
#include <sstream>

namespace twinclip::cli {

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BackendUnavailable: return kBackendFailure;
    case ErrorCode::NonFiniteLoss: return kNonFiniteLoss;
    default: return kConfigOrIo;
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path) {
  RunConfig cfg;
  if (!path) return cfg;
  std::ifstream in(*path);
  require(in.good(), ErrorCode::IoFailure, "cannot open config " + path->string());
  std::stringstream ss;
  ss << in.rdbuf();
  const nlohmann::json doc = nlohmann::json::parse(ss.str(), nullptr, false);
  require(!doc.is_discarded() && doc.is_object(), ErrorCode::ConfigError,
          path->string() + ": not a JSON object");
  const auto base = path->parent_path();
  for (const auto& [key, value] : doc.items()) {
    if (key == "curate") {
      cfg.curate = pipeline_config_from_json(value, base);
      cfg.has_curate = true;
    } else if (key == "train") {
      cfg.train = train_config_from_json(value);
      if (!cfg.train.checkpoint_dir.empty() && cfg.train.checkpoint_dir.is_relative()) {
        cfg.train.checkpoint_dir = base / cfg.train.checkpoint_dir;
      }
    } else if (key == "eval") {
      cfg.eval = parse_suite_config(value, base);
    } else {
      fail(ErrorCode::ConfigError, path->string() + ": unknown section '" + key + "'");
    }
  }
  return cfg;
}

std::optional<std::filesystem::path> default_cache_for(const std::filesystem::path& dataset) {
  auto candidate = dataset.parent_path() / "images.cache";
  if (std::filesystem::exists(candidate)) return candidate;
  return std::nullopt;
}

}  // namespace twinclip::cli
