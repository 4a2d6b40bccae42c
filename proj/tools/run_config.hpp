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

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "twinclip/curate.hpp"
#include "twinclip/error.hpp"
#include "twinclip/evaluate.hpp"
#include "twinclip/train.hpp"

namespace twinclip::cli {

/// Process exit codes. Stable; documented in the README.
enum ExitCode : int {
  kOk = 0,
  kGradCheckFailed = 1,
  kConfigOrIo = 2,
  kBackendFailure = 3,
  kEmptyOutput = 4,
  kNonFiniteLoss = 5,
};

int exit_code_for(ErrorCode code) noexcept;

/// One JSON file with optional "curate", "train" and "eval" sections.
struct RunConfig {
  PipelineConfig curate;
  TrainConfig train;
  std::optional<SuiteConfig> eval;
  bool has_curate = false;
};

/// Unknown top-level or section keys raise ConfigError. Relative paths
/// resolve against the config file's directory.
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);

/// `<dataset dir>/images.cache` when present, else nullopt.
std::optional<std::filesystem::path> default_cache_for(const std::filesystem::path& dataset);

}  // namespace twinclip::cli
