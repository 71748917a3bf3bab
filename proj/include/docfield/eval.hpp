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

#include "docfield/dataio.hpp"
#include "docfield/model.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace docfield {

/// Region ids with one label each.
struct Labeling {
  std::vector<std::string> region_ids;
  std::vector<std::string> labels;
};

/// Fraction of `truth` regions whose label `predicted` reproduces. Both sides
/// must cover the same region ids; throws std::invalid_argument otherwise or
/// when there is nothing to score.
double pair_accuracy(const Labeling& predicted, const Labeling& truth);

/// Ground truth of a query: labeled field regions, optionally without the
/// background ones.
Labeling scored_truth(const Document& query, bool drop_background);
/// Predicted labels restricted to the regions of `truth`.
Labeling restrict_to(const Prediction& pred, const Labeling& truth);

struct ScoredPair {
  Labeling predicted;
  Labeling truth;
};

/// counts(gt, pred) summed over pairs. Throws std::invalid_argument on labels
/// outside the space.
Eigen::MatrixXi confusion_matrix(std::span<const ScoredPair> pairs, const LabelSpace& labels);

struct EvalSettings {
  int shots = 1;  // 1 or 5
  bool drop_background = false;
  int landmark_drop = 0;
  std::uint64_t seed = 0;
  int max_subsets = 20;
  std::string split = "test";
  int threads = 0;
};

struct QueryResult {
  std::string type_id;
  std::string doc_id;
  double accuracy = 0;
  int trials = 0;              // supports (1-shot) or support subsets (5-shot)
  int no_correspondence = 0;   // trials scored 0 for lack of matched landmarks
};

struct TypeResult {
  std::string type_id;
  double accuracy = 0;
  LabelSpace labels;
  Eigen::MatrixXi confusion;
};

struct EvalReport {
  EvalSettings settings;
  std::vector<TypeResult> types;  // sorted by type_id
  std::vector<QueryResult> queries;
  double overall = 0;
};

/// Pairwise protocol: every query against every other document of its type
/// (1-shot) or against seeded 5-document support subsets (5-shot). Type
/// accuracy averages queries, overall averages types.
EvalReport evaluate(const DatasetManifest& ds, const ModelParams& params,
                    const EvalSettings& settings);

struct BackgroundImpact {
  double acc_with_bg = 0;
  double acc_without_bg = 0;
  double incre = 0;  // without - with
};

BackgroundImpact background_impact(const DatasetManifest& ds, const ModelParams& params,
                                   EvalSettings settings);

nlohmann::ordered_json to_json(const EvalSettings& s);
nlohmann::ordered_json to_json(const EvalReport& r);
/// Aligned per-type table followed by the overall line.
std::string format_table(const EvalReport& r);
/// One "type_id,truth,predicted,count" row per nonzero cell.
void write_confusion_csv(const EvalReport& r, const std::filesystem::path& path);

}  // namespace docfield
