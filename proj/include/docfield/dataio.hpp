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

#include "docfield/document.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docfield {

/// Malformed or invalid dataset content. The message names the document and
/// region involved.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Documents of one template class. All share the same split tag.
struct TypeGroup {
  std::string type_id;
  std::string split;  // "train" | "test"
  std::vector<Document> documents;
};

struct DatasetManifest {
  std::string root;
  std::vector<TypeGroup> types;  // sorted by type_id
  nlohmann::ordered_json generator;  // effective generator config, may be null

  std::vector<const TypeGroup*> types_in(std::string_view split) const;
  /// Copy restricted to one split.
  DatasetManifest subset(std::string_view split) const;
  std::size_t document_count() const;
};

/// Parses one document; throws DatasetError naming the document/region.
Document document_from_json(const nlohmann::json& j);
nlohmann::ordered_json document_to_json(const Document& doc);

Document load_document(const std::filesystem::path& path);
void save_document(const Document& doc, const std::filesystem::path& path);

/// Reads <dir>/manifest.json and every listed document. Boxes are clamped to
/// the page; every type must hold at least two documents.
DatasetManifest load_dataset(const std::filesystem::path& dir);
void save_dataset(const DatasetManifest& ds, const std::filesystem::path& dir);

}  // namespace docfield
