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

#include "docfield/docgraph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

namespace docfield {

LabelSpace::LabelSpace(std::vector<std::string> labels) {
  std::set<std::string> rest;
  for (auto& l : labels) {
    if (l != kBackgroundLabel) rest.insert(std::move(l));
  }
  labels_.reserve(rest.size() + 1);
  labels_.emplace_back(kBackgroundLabel);
  labels_.insert(labels_.end(), rest.begin(), rest.end());
}

LabelSpace LabelSpace::from_support(const Document& support) {
  std::vector<std::string> labels;
  for (const auto& r : support.regions) {
    if (r.role == Role::Field && r.label) labels.push_back(*r.label);
  }
  return LabelSpace(std::move(labels));
}

int LabelSpace::index_of(std::string_view label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

LandmarkMatch match_landmarks(const Document& support, const Document& query) {
  std::vector<std::string> support_keys;
  std::map<std::string, int> support_count;
  for (const auto& r : support.regions) {
    if (r.role != Role::Landmark) continue;
    support_keys.push_back(normalize_text(r.text));
    ++support_count[support_keys.back()];
  }
  if (support_keys.empty()) {
    throw std::invalid_argument("match_landmarks: support has no landmark regions");
  }

  std::map<std::string, int> query_count;
  std::map<std::string, const TextRegion*> query_by_key;
  for (const auto& r : query.regions) {
    std::string key = normalize_text(r.text);
    ++query_count[key];
    query_by_key.emplace(std::move(key), &r);
  }

  LandmarkMatch match;
  int k = 0;
  for (const auto& r : support.regions) {
    if (r.role != Role::Landmark) continue;
    const std::string& key = support_keys[k++];
    const auto qc = query_count.find(key);
    if (!key.empty() && support_count[key] == 1 && qc != query_count.end() && qc->second == 1) {
      match.pairs.push_back({r.id, query_by_key.at(key)->id});
    } else {
      match.dropped.push_back(r.id);
    }
  }
  if (match.pairs.empty()) throw NoCorrespondenceError();
  return match;
}

DocumentGraph build_graph(const Document& doc, const LandmarkMatch* match, GraphSide side,
                          const LabelSpace& label_space, const RayConfig& ray_cfg) {
  DocumentGraph g;
  g.label_space = label_space;

  std::unordered_map<std::string_view, const TextRegion*> by_id;
  for (const auto& r : doc.regions) by_id.emplace(r.id, &r);

  std::unordered_set<std::string_view> landmark_set;
  if (match != nullptr) {
    for (const auto& p : match->pairs) {
      const std::string& id = side == GraphSide::Support ? p.support_id : p.query_id;
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw std::invalid_argument("build_graph: matched region '" + id + "' not in document " +
                                    doc.doc_id);
      }
      g.landmark_ids.push_back(id);
      g.landmarks.push_back(it->second->box);
      landmark_set.insert(it->second->id);
    }
  } else {
    for (const auto& r : doc.regions) {
      if (r.role != Role::Landmark) continue;
      g.landmark_ids.push_back(r.id);
      g.landmarks.push_back(r.box);
      landmark_set.insert(r.id);
    }
  }

  std::vector<const TextRegion*> fields;
  for (const auto& r : doc.regions) {
    const bool is_field = side == GraphSide::Support || match == nullptr
                              ? r.role == Role::Field
                              : !landmark_set.contains(r.id);
    if (is_field) fields.push_back(&r);
  }
  std::sort(fields.begin(), fields.end(), [](const TextRegion* a, const TextRegion* b) {
    return std::tie(a->box.y_min, a->box.x_min, a->box.y_max, a->box.x_max, a->id) <
           std::tie(b->box.y_min, b->box.x_min, b->box.y_max, b->box.x_max, b->id);
  });
  for (const TextRegion* r : fields) {
    g.field_ids.push_back(r->id);
    g.fields.push_back(r->box);
    g.labels.push_back(r->label ? label_space.index_of(*r->label) : -1);
  }
  if (g.fields.empty()) {
    throw std::invalid_argument("build_graph: empty F in document " + doc.doc_id);
  }

  g.ff_edges = visibility_edges<double>(g.fields, ray_cfg);
  for (int i = 0; i < g.num_fields(); ++i) g.ff_edges.push_back({i, i});
  std::sort(g.ff_edges.begin(), g.ff_edges.end());
  return g;
}

Eigen::MatrixXd lf_feature_tensor(const DocumentGraph& g) {
  const int nl = g.num_landmarks();
  const int nf = g.num_fields();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(nl) * nf, kPairFeatureDim);
  for (int j = 0; j < nl; ++j) {
    for (int i = 0; i < nf; ++i) {
      out.row(static_cast<Eigen::Index>(j) * nf + i) =
          pair_feature(g.landmarks[j], g.fields[i]).transpose();
    }
  }
  return out;
}

Eigen::MatrixXd ff_feature_tensor(const DocumentGraph& g) {
  Eigen::MatrixXd out(g.num_ff_edges(), kPairFeatureDim);
  for (int e = 0; e < g.num_ff_edges(); ++e) {
    const auto& edge = g.ff_edges[e];
    out.row(e) = pair_feature(g.fields[edge.src], g.fields[edge.dst]).transpose();
  }
  return out;
}

GraphStats graph_stats(const DocumentGraph& g, int num_labels) {
  GraphStats s;
  s.n_fields = g.num_fields();
  s.n_landmarks = g.num_landmarks();
  s.n_ff_edges = g.num_ff_edges();
  const double k2 = static_cast<double>(num_labels) * num_labels;
  s.beta = s.n_fields > 0 ? static_cast<double>(s.n_ff_edges) / s.n_fields : 0.0;
  s.mem_sparse_units = s.n_ff_edges * k2;
  s.mem_full_units = static_cast<double>(s.n_fields) * s.n_fields * k2;
  s.reduction = s.mem_full_units > 0 ? 1.0 - s.mem_sparse_units / s.mem_full_units : 0.0;
  return s;
}

}  // namespace docfield
