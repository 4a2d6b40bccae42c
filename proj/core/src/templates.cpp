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


#include "twinclip/templates.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <utility>

#include "twinclip/error.hpp"
#include "twinclip/evaluate.hpp"

namespace twinclip::curate::detail {
extern const std::array<std::pair<std::string_view, std::string_view>, 8> kEmbeddedTemplates;
}  // namespace twinclip::curate::detail

namespace twinclip {

namespace {

bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

}  // namespace

std::vector<std::string_view> template_ids() {
  std::vector<std::string_view> ids;
  for (const auto& [id, body] : curate::detail::kEmbeddedTemplates) ids.push_back(id);
  return ids;
}

bool is_known_template(std::string_view id) {
  const auto ids = template_ids();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_slot_char(tmpl[j])) ++j;
    if (j == i + 1 || j >= tmpl.size() || tmpl[j] != '}') continue;
    std::string name(tmpl.substr(i + 1, j - i - 1));
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    i = j;
  }
  return out;
}

TemplateSet::TemplateSet() {
  for (const auto& [id, body] : curate::detail::kEmbeddedTemplates) {
    texts_.emplace(std::string(id), std::string(body));
  }
}

TemplateSet::TemplateSet(const std::filesystem::path& override_dir) : TemplateSet() {
  for (auto& [id, body] : texts_) {
    const auto path = override_dir / (id + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::IoFailure, "cannot read template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    body = ss.str();
  }
}

const std::string& TemplateSet::text(std::string_view id) const {
  auto it = texts_.find(id);
  require(it != texts_.end(), ErrorCode::InvalidArgument, "unknown template '" + std::string(id) + "'");
  return it->second;
}

std::string TemplateSet::render(std::string_view id,
                                const std::map<std::string, std::string>& fields) const {
  const std::string& body = text(id);
  const auto slots = placeholders(body);
  for (const auto& slot : slots) {
    require(fields.contains(slot), ErrorCode::MissingField,
            std::string(id) + ": no value for {" + slot + "}");
  }
  for (const auto& [key, value] : fields) {
    require(std::find(slots.begin(), slots.end(), key) != slots.end(), ErrorCode::InvalidArgument,
            std::string(id) + ": template has no {" + key + "} slot");
  }
  return fill_template(body, fields);
}

}  // namespace twinclip
