// Copyright (c) 2026 The docfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "docfield/geometry.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace docfield {

inline constexpr std::string_view kBackgroundLabel = "background";

enum class Role { Landmark, Field };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

/// One OCR text line. Landmarks carry no label; fields on labeled documents
/// carry exactly one (multi-region fields repeat the label).
struct TextRegion {
  std::string id;
  std::optional<std::array<Point, 4>> quad;
  BBox box;
  std::string text;
  Role role = Role::Field;
  std::optional<std::string> label;
};

struct Document {
  std::string doc_id;
  std::string type_id;
  double width = 0;
  double height = 0;
  std::vector<TextRegion> regions;

  const TextRegion* find(std::string_view region_id) const;
};

/// Clamps every region box into [0,width]x[0,height].
void clamp_to_page(Document& doc);

/// NFKC + case fold, trimmed, with internal whitespace runs collapsed to one
/// ASCII space. Input and output are UTF-8.
std::string normalize_text(std::string_view utf8);

}  // namespace docfield
