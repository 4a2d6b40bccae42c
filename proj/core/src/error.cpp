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

#include "twinclip/error.hpp"

namespace twinclip {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::UnreadableImage: return "UnreadableImage";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateOutput: return "DegenerateOutput";
    case ErrorCode::NonPositiveTau: return "NonPositiveTau";
    case ErrorCode::MissingRole: return "MissingRole";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::GenerationRejected: return "GenerationRejected";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::InvalidTwin: return "InvalidTwin";
    case ErrorCode::ScoreParseFailure: return "ScoreParseFailure";
    case ErrorCode::DegenerateItem: return "DegenerateItem";
    case ErrorCode::KExceedsCorpus: return "KExceedsCorpus";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)) {}

void fail(ErrorCode code, std::string detail) { throw Error(code, std::move(detail)); }

}  // namespace twinclip
