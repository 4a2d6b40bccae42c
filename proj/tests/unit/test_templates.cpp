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


#include <fstream>
#include <set>

#include "support/checks.hpp"
#include "twinclip/templates.hpp"

namespace tc = twinclip;
using tc::testing::TempDir;

TEST_SUITE("templates") {
  TEST_CASE("every shipped template is present with its slots") {
    const tc::TemplateSet set;
    const std::map<std::string_view, std::vector<std::string>> expected = {
        {tc::kTemplateBottomUpFilter, {"title"}},
        {tc::kTemplateBottomUpClassify, {"concept", "definition", "caption", "image_url"}},
        {tc::kTemplateTopDown, {"country", "category"}},
        {tc::kTemplateTwinMatch, {"category", "concept", "context", "visual_features"}},
        {tc::kTemplateCaptions, {"concept", "context", "visual_features", "k"}},
        {tc::kTemplateJudgeAuthenticity, {"concept", "context"}},
        {tc::kTemplateJudgeConsistency, {"concept", "context"}},
        {tc::kTemplateJudgeFidelity, {"concept", "context", "image"}},
    };
    CHECK(tc::template_ids().size() == expected.size());
    for (auto id : tc::template_ids()) {
      CAPTURE(id);
      REQUIRE(expected.count(id) == 1);
      const auto slots = tc::placeholders(set.text(id));
      CHECK(std::set<std::string>(slots.begin(), slots.end()) ==
            std::set<std::string>(expected.at(id).begin(), expected.at(id).end()));
      CHECK(tc::is_known_template(id));
    }
    CHECK_FALSE(tc::is_known_template(tc::kImageSynthesisId));
  }

  TEST_CASE("placeholder scanning ignores non-identifier braces") {
    CHECK(tc::placeholders("{a} {b_c} {a} {\"json\": 1} {Upper} {}") == std::vector<std::string>{"a", "b_c"});
  }

  TEST_CASE("render fills slots and checks the field set") {
    const tc::TemplateSet set;
    const auto prompt = set.render(tc::kTemplateTopDown, {{"country", "China"}, {"category", "Cuisine"}});
    CHECK(prompt.find("China") != std::string::npos);
    CHECK(prompt.find("{country}") == std::string::npos);
    CHECK_ERROR_CODE(set.render(tc::kTemplateTopDown, {{"country", "China"}}), tc::ErrorCode::MissingField);
    CHECK_ERROR_CODE(
        set.render(tc::kTemplateTopDown, {{"country", "China"}, {"category", "Art"}, {"extra", "x"}}),
        tc::ErrorCode::InvalidArgument);
    CHECK_ERROR_CODE(set.text("no_such_template"), tc::ErrorCode::InvalidArgument);
  }

  TEST_CASE("a directory can override individual templates") {
    TempDir dir("templates");
    std::ofstream(dir / "bottom_up_filter.txt") << "Is {title} cultural? A or B.";
    const tc::TemplateSet base;
    const tc::TemplateSet custom(dir.path());
    CHECK(custom.render(tc::kTemplateBottomUpFilter, {{"title", "Erhu"}}) == "Is Erhu cultural? A or B.");
    CHECK(custom.text(tc::kTemplateTwinMatch) == base.text(tc::kTemplateTwinMatch));
  }
}
