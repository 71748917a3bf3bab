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

#include "docfield/document.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <stdexcept>

namespace docfield {

std::string_view to_string(Role role) {
  return role == Role::Landmark ? "landmark" : "field";
}

Role role_from_string(std::string_view s) {
  if (s == "landmark") return Role::Landmark;
  if (s == "field") return Role::Field;
  throw std::invalid_argument("unknown region role '" + std::string(s) + "'");
}

const TextRegion* Document::find(std::string_view region_id) const {
  for (const auto& r : regions) {
    if (r.id == region_id) return &r;
  }
  return nullptr;
}

void clamp_to_page(Document& doc) {
  for (auto& r : doc.regions) {
    r.box.x_min = std::clamp(r.box.x_min, 0.0, doc.width);
    r.box.x_max = std::clamp(r.box.x_max, 0.0, doc.width);
    r.box.y_min = std::clamp(r.box.y_min, 0.0, doc.height);
    r.box.y_max = std::clamp(r.box.y_max, 0.0, doc.height);
  }
}

std::string normalize_text(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc_cf = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("normalize_text: ICU NFKC_Casefold unavailable");
  }
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  const icu::UnicodeString folded = nfkc_cf->normalize(src, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("normalize_text: normalization failed");
  }

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < folded.length();) {
    const UChar32 c = folded.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) collapsed.append(static_cast<UChar32>(' '));
    pending_space = false;
    collapsed.append(c);
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

}  // namespace docfield
