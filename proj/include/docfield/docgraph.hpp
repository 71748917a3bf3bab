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
#include "docfield/geometry.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace docfield {

/// Thrown when a query shares no unambiguous landmark with its support.
class NoCorrespondenceError : public std::runtime_error {
 public:
  NoCorrespondenceError() : std::runtime_error("no correspondence") {}
};

/// Ordered field-type names. "background" is always index 0; the remaining
/// labels follow in lexicographic order.
class LabelSpace {
 public:
  LabelSpace() : labels_{std::string(kBackgroundLabel)} {}
  explicit LabelSpace(std::vector<std::string> labels);

  static LabelSpace from_support(const Document& support);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::string& label(int index) const { return labels_.at(index); }
  const std::vector<std::string>& labels() const { return labels_; }
  /// -1 when absent.
  int index_of(std::string_view label) const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

 private:
  std::vector<std::string> labels_;
};

struct LandmarkPair {
  std::string support_id;
  std::string query_id;
};

struct LandmarkMatch {
  std::vector<LandmarkPair> pairs;  // support landmark order
  std::vector<std::string> dropped;
};

/// Pairs support landmarks with query regions whose normalized text is
/// unique on both sides. Throws NoCorrespondenceError when nothing pairs.
LandmarkMatch match_landmarks(const Document& support, const Document& query);

enum class GraphSide { Support, Query };

struct DocumentGraph {
  std::vector<std::string> landmark_ids;
  std::vector<BBox> landmarks;
  std::vector<std::string> field_ids;
  std::vector<BBox> fields;
  /// Sorted by (src, dst); contains exactly one self-loop per field.
  std::vector<DirectedEdge> ff_edges;
  /// Per-field label index into label_space, -1 when unlabeled or unknown.
  std::vector<int> labels;
  LabelSpace label_space;

  int num_landmarks() const { return static_cast<int>(landmarks.size()); }
  int num_fields() const { return static_cast<int>(fields.size()); }
  int num_ff_edges() const { return static_cast<int>(ff_edges.size()); }
  std::size_t num_lf_edges() const { return landmarks.size() * fields.size(); }
};

/// Builds the landmark/field graph of one side of a pair.
///
/// Landmarks are the matched ones in support order when `match` is given,
/// otherwise every landmark-role region. Fields are the field-role regions
/// on the support side and every unmatched region on the query side, in
/// reading order of their boxes (top, left, bottom, right, then id).
DocumentGraph build_graph(const Document& doc, const LandmarkMatch* match, GraphSide side,
                          const LabelSpace& label_space, const RayConfig& ray_cfg = {});

/// (|L|*|F|) x 8, row j*|F| + i holds pair_feature(landmark j, field i).
Eigen::MatrixXd lf_feature_tensor(const DocumentGraph& g);

/// E x 8 aligned with g.ff_edges, row e holds pair_feature(src, dst).
Eigen::MatrixXd ff_feature_tensor(const DocumentGraph& g);

struct GraphStats {
  int n_fields = 0;
  int n_landmarks = 0;
  int n_ff_edges = 0;
  double beta = 0;
  double mem_sparse_units = 0;
  double mem_full_units = 0;
  double reduction = 0;
};

GraphStats graph_stats(const DocumentGraph& g, int num_labels);

}  // namespace docfield
