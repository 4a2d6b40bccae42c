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

#include <stdexcept>
#include <string>
#include <string_view>

namespace twinclip {

enum class ErrorCode {
  MalformedJson,
  MissingField,
  InvariantViolation,
  IoFailure,
  EmptyDataset,
  BatchTooLarge,
  EmptyText,
  UnreadableImage,
  DimensionMismatch,
  DegenerateOutput,
  NonPositiveTau,
  MissingRole,
  DegenerateBatch,
  NonFiniteLoss,
  ChecksumMismatch,
  ShapeMismatch,
  BackendUnavailable,
  GenerationRejected,
  ParseFailure,
  InvalidTwin,
  ScoreParseFailure,
  DegenerateItem,
  KExceedsCorpus,
  InvalidArgument,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above plus a
/// human-readable detail naming the offending field, line or value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, std::string detail);

inline void require(bool condition, ErrorCode code, std::string_view detail) {
  if (!condition) fail(code, std::string(detail));
}

}  // namespace twinclip
