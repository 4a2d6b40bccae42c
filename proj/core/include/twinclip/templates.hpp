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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twinclip {

/// Identifiers of the shipped prompt templates.
inline constexpr std::string_view kTemplateBottomUpFilter = "bottom_up_filter";
inline constexpr std::string_view kTemplateBottomUpClassify = "bottom_up_classify";
inline constexpr std::string_view kTemplateTopDown = "top_down_generate";
inline constexpr std::string_view kTemplateTwinMatch = "twin_match";
inline constexpr std::string_view kTemplateCaptions = "caption_generate";
inline constexpr std::string_view kTemplateJudgeAuthenticity = "judge_authenticity";
inline constexpr std::string_view kTemplateJudgeConsistency = "judge_consistency";
inline constexpr std::string_view kTemplateJudgeFidelity = "judge_fidelity";
/// Not a prompt template: tags image synthesis requests on the wire.
inline constexpr std::string_view kImageSynthesisId = "image_synthesis";

std::vector<std::string_view> template_ids();
bool is_known_template(std::string_view id);

/// `{name}` slots in order of first appearance. Braces around anything other
/// than a lowercase identifier are literal text.
std::vector<std::string> placeholders(std::string_view tmpl);

/// Template set, compiled-in by default. A directory override replaces any
/// template whose `<id>.txt` exists there.
class TemplateSet {
 public:
  TemplateSet();
  explicit TemplateSet(const std::filesystem::path& override_dir);

  const std::string& text(std::string_view id) const;

  /// Fills every slot; a slot without a value raises MissingField and an
  /// unused value raises InvalidArgument.
  std::string render(std::string_view id, const std::map<std::string, std::string>& fields) const;

 private:
  std::map<std::string, std::string, std::less<>> texts_;
};

}  // namespace twinclip
