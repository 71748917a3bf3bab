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

#include "docfield/autodiff.hpp"
#include "docfield/docgraph.hpp"
#include "docfield/mlp.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace docfield {

/// Raw score given to labels (or label pairs) the support never shows.
inline constexpr double kAbsentScore = -30.0;
/// Probability floor applied to beliefs, in log domain.
inline const double kLogProbFloor = std::log(1e-30);

enum class UnarySource { LFAttn, Uniform };

std::string_view to_string(UnarySource u);
UnarySource unary_source_from_string(std::string_view s);

struct ModelConfig {
  int bp_steps = 2;
  bool avg_before_attention = false;
  UnarySource unary_source = UnarySource::LFAttn;
  std::vector<int> hidden = {64, 64};
};

struct ModelParams {
  MlpParams lf_mlp;  // 16 -> hidden -> 1, input f_L (+) c
  MlpParams ff_mlp;  // 16 -> hidden -> 1, input c (+) f_F
  ModelConfig config;

  static ModelParams init(std::uint64_t seed, const ModelConfig& cfg);
  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;
};

/// Per-label, per-landmark mean of support LF features.
struct LFPrototypes {
  int num_labels = 0;
  int num_landmarks = 0;
  Eigen::MatrixXd c;       // (K*|L|) x 8, row k*|L| + j
  std::vector<int> count;  // support fields per label
  bool present(int k) const { return count[k] > 0; }
};

/// Per ordered label pair mean of support FF features (self-loops included).
struct FFPrototypes {
  int num_labels = 0;
  Eigen::MatrixXd c;       // (K*K) x 8, row k1*K + k2
  std::vector<int> count;  // support edges per pair
  bool present(int k1, int k2) const { return count[k1 * num_labels + k2] > 0; }
};

LFPrototypes lf_prototypes(const DocumentGraph& support);
FFPrototypes ff_prototypes(const DocumentGraph& support);

/// |F| x K scores: MLP on every (landmark, field, label) triple, then the mean
/// over landmarks. `q_lf` is laid out as by lf_feature_tensor.
Eigen::MatrixXd lfattn_scores(const Eigen::MatrixXd& q_lf, int num_fields,
                              const LFPrototypes& protos, const MlpParams& lf_mlp);
/// Ablation: mean over landmarks first, one MLP call per (field, label).
Eigen::MatrixXd avgattn_scores(const Eigen::MatrixXd& q_lf, int num_fields,
                               const LFPrototypes& protos, const MlpParams& lf_mlp);
/// E x K^2 pairwise tables, column k1*K + k2; each row is a softmax.
Eigen::MatrixXd ffattn_tables(const Eigen::MatrixXd& q_ff, const FFPrototypes& protos,
                              const MlpParams& ff_mlp);
/// Synchronous sum-product updates over directed edges; see the tape variant.
Eigen::MatrixXd belief_propagation(const Eigen::MatrixXd& p0, std::span<const DirectedEdge> edges,
                                   const Eigen::MatrixXd& q, int steps);

namespace ad_ops {

ad::Var lfattn_scores(ad::Tape& tape, const Eigen::MatrixXd& q_lf, int num_fields,
                      const LFPrototypes& protos, const MlpVars& lf_mlp);
ad::Var avgattn_scores(ad::Tape& tape, const Eigen::MatrixXd& q_lf, int num_fields,
                       const LFPrototypes& protos, const MlpVars& lf_mlp);
/// Returns log Q (E x K^2).
ad::Var ffattn_log_tables(ad::Tape& tape, const Eigen::MatrixXd& q_ff, const FFPrototypes& protos,
                          const MlpVars& ff_mlp);
/// Log-domain BP. Per step, for each field i:
///   log P_i <- normalize( log P_i + sum over edges j->i, j != i, of log sum_l P_j(l) Q_e(l, .) )
/// All messages of a step read the previous beliefs. The self-loop message is
/// the field's own belief, so the unary enters only as the initial belief and
/// is carried forward; self-loop rows of Q do not take part. Every field needs
/// exactly one self-loop.
ad::Var belief_propagation(ad::Var log_p0, std::span<const DirectedEdge> edges, ad::Var log_q,
                           int steps);

}  // namespace ad_ops

/// Everything a forward pass needs from one (support, query) pair.
struct PairInputs {
  DocumentGraph support;
  DocumentGraph query;
  LFPrototypes lf_protos;
  FFPrototypes ff_protos;
  Eigen::MatrixXd q_lf;
  Eigen::MatrixXd q_ff;
};

/// Matches landmarks, builds both graphs over the support's label space and
/// computes prototypes and query features. Throws NoCorrespondenceError.
PairInputs prepare_pair(const Document& support, const Document& query,
                        const RayConfig& ray_cfg = {});
PairInputs prepare_pair(const Document& support, const Document& query, const LandmarkMatch& match,
                        const RayConfig& ray_cfg = {});

struct ForwardVars {
  ad::Var scores;       // S, |F| x K
  ad::Var log_p0;       // |F| x K
  ad::Var log_q;        // E x K^2
  ad::Var log_p_final;  // |F| x K
};

ForwardVars forward(ad::Tape& tape, const PairInputs& in, const MlpVars& lf_mlp,
                    const MlpVars& ff_mlp, const ModelConfig& cfg);

struct ForwardResult {
  Eigen::MatrixXd scores;
  Eigen::MatrixXd p0;
  Eigen::MatrixXd q;
  Eigen::MatrixXd p_final;
};

ForwardResult forward(const PairInputs& in, const ModelParams& params);

/// Mean over labeled query fields of -log P_final[i][y_i]. Unlabeled fields
/// (label -1) are skipped; throws when none remain.
ad::Var loss(ad::Var log_p_final, std::span<const int> labels);
double loss(const Eigen::MatrixXd& p_final, std::span<const int> labels);

/// Row-wise argmax, ties to the lowest index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& p);

struct RegionPrediction {
  std::string region_id;
  std::string label;
  double probability = 0;
};

struct Prediction {
  LabelSpace label_space;
  std::vector<RegionPrediction> regions;  // query graph field order
  Eigen::MatrixXd p_final;
};

Prediction predict(const Document& support, const Document& query, const ModelParams& params,
                   const RayConfig& ray_cfg = {});
Prediction predict(const PairInputs& in, const ModelParams& params);

/// Averages one-shot P_final over the supports that match the query, aligned
/// on the union label space and per query region id, then takes the argmax.
/// Throws NoCorrespondenceError when no support matches.
Prediction fewshot_predict(std::span<const Document> supports, const Document& query,
                           const ModelParams& params, const RayConfig& ray_cfg = {});

/// Averages already computed one-shot predictions of one query per region id.
/// Regions keep their order of first appearance.
Prediction average_predictions(std::span<const Prediction* const> shots);

}  // namespace docfield
