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

#include "docfield/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace docfield {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::vector<const TypeGroup*> DatasetManifest::types_in(std::string_view split) const {
  std::vector<const TypeGroup*> out;
  for (const auto& t : types) {
    if (t.split == split) out.push_back(&t);
  }
  return out;
}

DatasetManifest DatasetManifest::subset(std::string_view split) const {
  DatasetManifest out;
  out.root = root;
  out.generator = generator;
  for (const auto& t : types) {
    if (t.split == split) out.types.push_back(t);
  }
  return out;
}

std::size_t DatasetManifest::document_count() const {
  std::size_t n = 0;
  for (const auto& t : types) n += t.documents.size();
  return n;
}

namespace {

[[noreturn]] void fail(const std::string& doc_id, const std::string& what) {
  throw DatasetError("document '" + doc_id + "': " + what);
}

const json& required(const json& j, const char* key, const std::string& doc_id) {
  const auto it = j.find(key);
  if (it == j.end()) fail(doc_id, std::string("missing required key '") + key + "'");
  return *it;
}

double finite_number(const json& j, const std::string& doc_id, const std::string& what) {
  if (!j.is_number()) fail(doc_id, what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(doc_id, what + " must be finite");
  return v;
}

}  // namespace

Document document_from_json(const json& j) {
  if (!j.is_object()) throw DatasetError("document is not a JSON object");
  Document doc;
  const json& id = j.contains("doc_id") ? j.at("doc_id") : json();
  if (!id.is_string()) throw DatasetError("document: missing required key 'doc_id'");
  doc.doc_id = id.get<std::string>();
  const json& type_id = required(j, "type_id", doc.doc_id);
  if (!type_id.is_string()) fail(doc.doc_id, "type_id must be a string");
  doc.type_id = type_id.get<std::string>();
  doc.width = finite_number(required(j, "width", doc.doc_id), doc.doc_id, "width");
  doc.height = finite_number(required(j, "height", doc.doc_id), doc.doc_id, "height");
  if (doc.width <= 0 || doc.height <= 0) fail(doc.doc_id, "width and height must be positive");

  const json& regions = required(j, "regions", doc.doc_id);
  if (!regions.is_array()) fail(doc.doc_id, "regions must be an array");
  std::set<std::string> seen;
  for (const json& r : regions) {
    if (!r.is_object()) fail(doc.doc_id, "region is not an object");
    TextRegion region;
    const json& rid = required(r, "id", doc.doc_id);
    if (!rid.is_string()) fail(doc.doc_id, "region id must be a string");
    region.id = rid.get<std::string>();
    const std::string where = "region '" + region.id + "'";
    if (!seen.insert(region.id).second) fail(doc.doc_id, "duplicate " + where);

    const json& box = required(r, "box", doc.doc_id);
    if (!box.is_array() || box.size() != 4) fail(doc.doc_id, where + ": box needs 4 numbers");
    region.box = {finite_number(box[0], doc.doc_id, where + " box"),
                  finite_number(box[1], doc.doc_id, where + " box"),
                  finite_number(box[2], doc.doc_id, where + " box"),
                  finite_number(box[3], doc.doc_id, where + " box")};
    if (r.contains("quad") && !r.at("quad").is_null()) {
      const json& q = r.at("quad");
      if (!q.is_array() || q.size() != 8) fail(doc.doc_id, where + ": quad needs 8 numbers");
      std::array<Point, 4> quad;
      for (int k = 0; k < 4; ++k) {
        quad[k] = {finite_number(q[2 * k], doc.doc_id, where + " quad"),
                   finite_number(q[2 * k + 1], doc.doc_id, where + " quad")};
      }
      region.quad = quad;
      region.box = bounding_box(quad);
    }
    if (region.box.x_min > region.box.x_max || region.box.y_min > region.box.y_max) {
      fail(doc.doc_id, where + ": box has min > max");
    }

    const json& text = required(r, "text", doc.doc_id);
    if (!text.is_string()) fail(doc.doc_id, where + ": text must be a string");
    region.text = text.get<std::string>();
    const json& role = required(r, "role", doc.doc_id);
    if (!role.is_string()) fail(doc.doc_id, where + ": role must be a string");
    try {
      region.role = role_from_string(role.get<std::string>());
    } catch (const std::invalid_argument& e) {
      fail(doc.doc_id, where + ": " + e.what());
    }
    if (r.contains("label") && !r.at("label").is_null()) {
      if (!r.at("label").is_string()) fail(doc.doc_id, where + ": label must be a string");
      if (region.role == Role::Landmark) fail(doc.doc_id, where + ": landmark carries a label");
      region.label = r.at("label").get<std::string>();
    }
    doc.regions.push_back(std::move(region));
  }
  const bool has_field = std::any_of(doc.regions.begin(), doc.regions.end(),
                                     [](const TextRegion& r) { return r.role == Role::Field; });
  if (!has_field) fail(doc.doc_id, "empty F");
  clamp_to_page(doc);
  return doc;
}

ordered_json document_to_json(const Document& doc) {
  ordered_json j;
  j["doc_id"] = doc.doc_id;
  j["type_id"] = doc.type_id;
  j["width"] = doc.width;
  j["height"] = doc.height;
  ordered_json regions = ordered_json::array();
  for (const auto& r : doc.regions) {
    ordered_json jr;
    jr["id"] = r.id;
    jr["box"] = {r.box.x_min, r.box.y_min, r.box.x_max, r.box.y_max};
    if (r.quad) {
      ordered_json q = ordered_json::array();
      for (const auto& p : *r.quad) {
        q.push_back(p.x);
        q.push_back(p.y);
      }
      jr["quad"] = std::move(q);
    }
    jr["text"] = r.text;
    jr["role"] = std::string(to_string(r.role));
    if (r.label) jr["label"] = *r.label;
    regions.push_back(std::move(jr));
  }
  j["regions"] = std::move(regions);
  return j;
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

Document load_document(const fs::path& path) { return document_from_json(read_json(path)); }

void save_document(const Document& doc, const fs::path& path) {
  write_text(path, document_to_json(doc).dump(1) + "\n");
}

DatasetManifest load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory not found: " + dir.string());
  const json manifest = read_json(dir / "manifest.json");
  if (!manifest.contains("documents") || !manifest.at("documents").is_array()) {
    throw DatasetError("manifest.json: missing required key 'documents'");
  }

  std::map<std::string, TypeGroup> groups;
  std::set<std::string> doc_ids;
  for (const json& entry : manifest.at("documents")) {
    if (!entry.contains("file") || !entry.at("file").is_string()) {
      throw DatasetError("manifest.json: entry without 'file'");
    }
    const std::string split = entry.value("split", std::string("train"));
    if (split != "train" && split != "test") {
      throw DatasetError("manifest.json: unknown split '" + split + "'");
    }
    Document doc = load_document(dir / entry.at("file").get<std::string>());
    if (!doc_ids.insert(doc.doc_id).second) {
      throw DatasetError("duplicate doc_id '" + doc.doc_id + "'");
    }
    auto [it, fresh] = groups.try_emplace(doc.type_id, TypeGroup{doc.type_id, split, {}});
    if (it->second.split != split) {
      throw DatasetError("type '" + doc.type_id + "' has documents in both splits");
    }
    it->second.documents.push_back(std::move(doc));
  }

  DatasetManifest ds;
  ds.root = dir.string();
  if (manifest.contains("generator")) ds.generator = manifest.at("generator");
  for (auto& [id, group] : groups) {
    if (group.documents.size() < 2) {
      throw DatasetError("type '" + id + "' needs at least 2 documents");
    }
    ds.types.push_back(std::move(group));
  }
  return ds;
}

void save_dataset(const DatasetManifest& ds, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["format"] = "docfield-dataset";
  manifest["version"] = 1;
  if (!ds.generator.is_null()) manifest["generator"] = ds.generator;
  ordered_json docs = ordered_json::array();
  for (const auto& t : ds.types) {
    for (const auto& d : t.documents) {
      const std::string file = d.doc_id + ".json";
      save_document(d, dir / file);
      docs.push_back({{"file", file}, {"type_id", d.type_id}, {"split", t.split}});
    }
  }
  manifest["documents"] = std::move(docs);
  write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

}  // namespace docfield
