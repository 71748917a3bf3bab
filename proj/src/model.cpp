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

#include "docfield/model.hpp"

#include <map>
#include <stdexcept>

namespace docfield {

std::string_view to_string(UnarySource u) {
  return u == UnarySource::LFAttn ? "lfattn" : "uniform";
}

UnarySource unary_source_from_string(std::string_view s) {
  if (s == "lfattn") return UnarySource::LFAttn;
  if (s == "uniform") return UnarySource::Uniform;
  throw std::invalid_argument("unknown unary source '" + std::string(s) + "'");
}

ModelParams ModelParams::init(std::uint64_t seed, const ModelConfig& cfg) {
  std::vector<int> dims{2 * kPairFeatureDim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(1);
  ModelParams p;
  p.lf_mlp = init_params(seed, dims);
  p.ff_mlp = init_params(seed ^ 0x9e3779b97f4a7c15ULL, dims);
  p.config = cfg;
  return p;
}

std::vector<Eigen::MatrixXd*> ModelParams::tensors() {
  auto out = lf_mlp.tensors();
  const auto ff = ff_mlp.tensors();
  out.insert(out.end(), ff.begin(), ff.end());
  return out;
}

std::vector<const Eigen::MatrixXd*> ModelParams::tensors() const {
  auto out = lf_mlp.tensors();
  const auto ff = ff_mlp.tensors();
  out.insert(out.end(), ff.begin(), ff.end());
  return out;
}

LFPrototypes lf_prototypes(const DocumentGraph& support) {
  LFPrototypes p;
  p.num_labels = support.label_space.size();
  p.num_landmarks = support.num_landmarks();
  const int nl = p.num_landmarks;
  p.c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p.num_labels) * nl, kPairFeatureDim);
  p.count.assign(p.num_labels, 0);
  for (int i = 0; i < support.num_fields(); ++i) {
    const int k = support.labels[i];
    if (k < 0) continue;
    ++p.count[k];
    for (int j = 0; j < nl; ++j) {
      p.c.row(k * nl + j) += pair_feature(support.landmarks[j], support.fields[i]).transpose();
    }
  }
  for (int k = 0; k < p.num_labels; ++k) {
    if (p.count[k] > 0) p.c.middleRows(k * nl, nl) /= p.count[k];
  }
  return p;
}

FFPrototypes ff_prototypes(const DocumentGraph& support) {
  FFPrototypes p;
  p.num_labels = support.label_space.size();
  const int k2 = p.num_labels * p.num_labels;
  p.c = Eigen::MatrixXd::Zero(k2, kPairFeatureDim);
  p.count.assign(k2, 0);
  for (const auto& e : support.ff_edges) {
    const int a = support.labels[e.src];
    const int b = support.labels[e.dst];
    if (a < 0 || b < 0) continue;
    const int row = a * p.num_labels + b;
    ++p.count[row];
    p.c.row(row) += pair_feature(support.fields[e.src], support.fields[e.dst]).transpose();
  }
  for (int r = 0; r < k2; ++r) {
    if (p.count[r] > 0) p.c.row(r) /= p.count[r];
  }
  return p;
}

namespace ad_ops {

namespace {

Eigen::MatrixXd absent_label_mask(const LFPrototypes& protos, int num_fields) {
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(num_fields, protos.num_labels);
  for (int k = 0; k < protos.num_labels; ++k) {
    if (!protos.present(k)) mask.col(k).setConstant(kAbsentScore);
  }
  return mask;
}

void check_lf_shapes(const Eigen::MatrixXd& q_lf, int num_fields, const LFPrototypes& protos) {
  if (protos.num_landmarks < 1) throw std::invalid_argument("lfattn: no landmarks");
  if (q_lf.rows() != static_cast<Eigen::Index>(protos.num_landmarks) * num_fields ||
      q_lf.cols() != kPairFeatureDim) {
    throw std::invalid_argument("lfattn: query LF tensor does not match prototypes");
  }
}

}  // namespace

ad::Var lfattn_scores(ad::Tape& tape, const Eigen::MatrixXd& q_lf, int num_fields,
                      const LFPrototypes& protos, const MlpVars& lf_mlp) {
  check_lf_shapes(q_lf, num_fields, protos);
  const int nl = protos.num_landmarks;
  const int nk = protos.num_labels;
  int present = 0;
  for (int k = 0; k < nk; ++k) present += protos.present(k) ? 1 : 0;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(nl) * num_fields * present, 2 * kPairFeatureDim);
  std::vector<int> target;
  target.reserve(x.rows());
  Eigen::Index r = 0;
  for (int j = 0; j < nl; ++j) {
    for (int i = 0; i < num_fields; ++i) {
      for (int k = 0; k < nk; ++k) {
        if (!protos.present(k)) continue;
        x.row(r).head<kPairFeatureDim>() = q_lf.row(static_cast<Eigen::Index>(j) * num_fields + i);
        x.row(r).tail<kPairFeatureDim>() = protos.c.row(k * nl + j);
        target.push_back(i * nk + k);
        ++r;
      }
    }
  }
  const ad::Var raw = mlp_apply(lf_mlp, tape.constant(std::move(x)));
  const ad::Var summed = ad::scatter_add_rows(ad::scale(raw, 1.0 / nl), target,
                                              static_cast<Eigen::Index>(num_fields) * nk);
  return ad::add(ad::reshape(summed, num_fields, nk),
                 tape.constant(absent_label_mask(protos, num_fields)));
}

ad::Var avgattn_scores(ad::Tape& tape, const Eigen::MatrixXd& q_lf, int num_fields,
                       const LFPrototypes& protos, const MlpVars& lf_mlp) {
  check_lf_shapes(q_lf, num_fields, protos);
  const int nl = protos.num_landmarks;
  const int nk = protos.num_labels;
  Eigen::MatrixXd q_mean = Eigen::MatrixXd::Zero(num_fields, kPairFeatureDim);
  Eigen::MatrixXd c_mean = Eigen::MatrixXd::Zero(nk, kPairFeatureDim);
  for (int j = 0; j < nl; ++j) {
    q_mean += q_lf.middleRows(static_cast<Eigen::Index>(j) * num_fields, num_fields);
    for (int k = 0; k < nk; ++k) c_mean.row(k) += protos.c.row(k * nl + j);
  }
  q_mean /= nl;
  c_mean /= nl;

  std::vector<int> target;
  std::vector<Eigen::RowVectorXd> rows;
  for (int i = 0; i < num_fields; ++i) {
    for (int k = 0; k < nk; ++k) {
      if (!protos.present(k)) continue;
      Eigen::RowVectorXd row(2 * kPairFeatureDim);
      row << q_mean.row(i), c_mean.row(k);
      rows.push_back(std::move(row));
      target.push_back(i * nk + k);
    }
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 2 * kPairFeatureDim);
  for (std::size_t n = 0; n < rows.size(); ++n) x.row(static_cast<Eigen::Index>(n)) = rows[n];
  const ad::Var raw = mlp_apply(lf_mlp, tape.constant(std::move(x)));
  const ad::Var summed =
      ad::scatter_add_rows(raw, target, static_cast<Eigen::Index>(num_fields) * nk);
  return ad::add(ad::reshape(summed, num_fields, nk),
                 tape.constant(absent_label_mask(protos, num_fields)));
}

ad::Var ffattn_log_tables(ad::Tape& tape, const Eigen::MatrixXd& q_ff, const FFPrototypes& protos,
                          const MlpVars& ff_mlp) {
  if (q_ff.cols() != kPairFeatureDim) throw std::invalid_argument("ffattn: bad FF tensor width");
  const int nk = protos.num_labels;
  const int k2 = nk * nk;
  const Eigen::Index ne = q_ff.rows();
  std::vector<int> pairs;
  for (int p = 0; p < k2; ++p) {
    if (protos.count[p] > 0) pairs.push_back(p);
  }
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(ne, k2);
  for (int p = 0; p < k2; ++p) {
    if (protos.count[p] == 0) mask.col(p).setConstant(kAbsentScore);
  }
  if (pairs.empty()) return ad::log_softmax_rows(tape.constant(std::move(mask)));

  Eigen::MatrixXd x(ne * static_cast<Eigen::Index>(pairs.size()), 2 * kPairFeatureDim);
  std::vector<int> target;
  target.reserve(x.rows());
  Eigen::Index r = 0;
  for (Eigen::Index e = 0; e < ne; ++e) {
    for (int p : pairs) {
      x.row(r).head<kPairFeatureDim>() = protos.c.row(p);
      x.row(r).tail<kPairFeatureDim>() = q_ff.row(e);
      target.push_back(static_cast<int>(e) * k2 + p);
      ++r;
    }
  }
  const ad::Var raw = mlp_apply(ff_mlp, tape.constant(std::move(x)));
  const ad::Var table = ad::reshape(ad::scatter_add_rows(raw, target, ne * k2), ne, k2);
  return ad::log_softmax_rows(ad::add(table, tape.constant(std::move(mask))));
}

ad::Var belief_propagation(ad::Var log_p0, std::span<const DirectedEdge> edges, ad::Var log_q,
                           int steps) {
  if (steps < 0) throw std::invalid_argument("belief_propagation: negative step count");
  const Eigen::Index nf = log_p0.rows();
  const Eigen::Index nk = log_p0.cols();
  if (log_q.rows() != static_cast<Eigen::Index>(edges.size()) || log_q.cols() != nk * nk) {
    throw std::invalid_argument("belief_propagation: tables not aligned with edges");
  }
  std::vector<int> src, dst, cross;
  std::vector<int> loops(nf, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const DirectedEdge& d = edges[e];
    if (d.src < 0 || d.src >= nf || d.dst < 0 || d.dst >= nf) {
      throw std::invalid_argument("belief_propagation: edge endpoint out of range");
    }
    if (d.src == d.dst) {
      ++loops[d.src];
      continue;
    }
    src.push_back(d.src);
    dst.push_back(d.dst);
    cross.push_back(static_cast<int>(e));
  }
  for (Eigen::Index i = 0; i < nf; ++i) {
    if (loops[i] != 1) throw std::invalid_argument("belief_propagation: missing self-loop");
  }

  // A self-loop joins a field with itself, so its message is the belief unchanged.
  ad::Var log_p = log_p0;
  if (cross.empty()) return log_p;
  const ad::Var cross_q = ad::gather_rows(log_q, cross);
  for (int t = 0; t < steps; ++t) {
    const ad::Var messages = ad::log_matvec(ad::gather_rows(log_p, src), cross_q);
    const ad::Var incoming = ad::add(ad::scatter_add_rows(messages, dst, nf), log_p);
    log_p = ad::clamp_min(ad::log_softmax_rows(incoming), kLogProbFloor);
  }
  return log_p;
}

}  // namespace ad_ops

namespace {

template <typename F>
Eigen::MatrixXd eval_constant(F&& build) {
  ad::Tape tape;
  return build(tape).value();
}

}  // namespace

Eigen::MatrixXd lfattn_scores(const Eigen::MatrixXd& q_lf, int num_fields,
                              const LFPrototypes& protos, const MlpParams& lf_mlp) {
  return eval_constant([&](ad::Tape& t) {
    return ad_ops::lfattn_scores(t, q_lf, num_fields, protos, place_on_tape(t, lf_mlp, false));
  });
}

Eigen::MatrixXd avgattn_scores(const Eigen::MatrixXd& q_lf, int num_fields,
                               const LFPrototypes& protos, const MlpParams& lf_mlp) {
  return eval_constant([&](ad::Tape& t) {
    return ad_ops::avgattn_scores(t, q_lf, num_fields, protos, place_on_tape(t, lf_mlp, false));
  });
}

Eigen::MatrixXd ffattn_tables(const Eigen::MatrixXd& q_ff, const FFPrototypes& protos,
                              const MlpParams& ff_mlp) {
  return eval_constant([&](ad::Tape& t) {
           return ad_ops::ffattn_log_tables(t, q_ff, protos, place_on_tape(t, ff_mlp, false));
         })
      .array()
      .exp()
      .matrix();
}

Eigen::MatrixXd belief_propagation(const Eigen::MatrixXd& p0, std::span<const DirectedEdge> edges,
                                   const Eigen::MatrixXd& q, int steps) {
  if ((p0.array() < 0).any() || (q.array() < 0).any()) {
    throw std::invalid_argument("belief_propagation: negative probabilities");
  }
  const Eigen::MatrixXd log_p0 = p0.array().max(1e-30).log().matrix();
  const Eigen::MatrixXd log_q = q.array().max(1e-300).log().matrix();
  if (steps == 0) return p0;
  return eval_constant([&](ad::Tape& t) {
           return ad_ops::belief_propagation(t.constant(log_p0), edges, t.constant(log_q), steps);
         })
      .array()
      .exp()
      .matrix();
}

PairInputs prepare_pair(const Document& support, const Document& query,
                        const RayConfig& ray_cfg) {
  return prepare_pair(support, query, match_landmarks(support, query), ray_cfg);
}

PairInputs prepare_pair(const Document& support, const Document& query, const LandmarkMatch& match,
                        const RayConfig& ray_cfg) {
  if (match.pairs.empty()) throw NoCorrespondenceError();
  const LabelSpace labels = LabelSpace::from_support(support);
  PairInputs in;
  in.support = build_graph(support, &match, GraphSide::Support, labels, ray_cfg);
  in.query = build_graph(query, &match, GraphSide::Query, labels, ray_cfg);
  in.lf_protos = lf_prototypes(in.support);
  in.ff_protos = ff_prototypes(in.support);
  in.q_lf = lf_feature_tensor(in.query);
  in.q_ff = ff_feature_tensor(in.query);
  return in;
}

ForwardVars forward(ad::Tape& tape, const PairInputs& in, const MlpVars& lf_mlp,
                    const MlpVars& ff_mlp, const ModelConfig& cfg) {
  const int nf = in.query.num_fields();
  const int nk = in.support.label_space.size();
  const Eigen::Index ne = in.query.num_ff_edges();
  ForwardVars out;
  if (cfg.unary_source == UnarySource::LFAttn) {
    out.scores = cfg.avg_before_attention
                     ? ad_ops::avgattn_scores(tape, in.q_lf, nf, in.lf_protos, lf_mlp)
                     : ad_ops::lfattn_scores(tape, in.q_lf, nf, in.lf_protos, lf_mlp);
    out.log_p0 = ad::clamp_min(ad::log_softmax_rows(out.scores), kLogProbFloor);
  } else {
    out.scores = tape.constant(Eigen::MatrixXd::Zero(nf, nk));
    out.log_p0 = tape.constant(Eigen::MatrixXd::Constant(nf, nk, -std::log(double(nk))));
  }
  if (cfg.bp_steps > 0) {
    out.log_q = ad_ops::ffattn_log_tables(tape, in.q_ff, in.ff_protos, ff_mlp);
    out.log_p_final =
        ad_ops::belief_propagation(out.log_p0, in.query.ff_edges, out.log_q, cfg.bp_steps);
  } else {
    // FFAttn is not evaluated without BP; Q is reported as uniform.
    out.log_q = tape.constant(
        Eigen::MatrixXd::Constant(ne, static_cast<Eigen::Index>(nk) * nk, -2.0 * std::log(double(nk))));
    out.log_p_final = out.log_p0;
  }
  return out;
}

ForwardResult forward(const PairInputs& in, const ModelParams& params) {
  ad::Tape tape;
  const MlpVars lf = place_on_tape(tape, params.lf_mlp, false);
  const MlpVars ff = place_on_tape(tape, params.ff_mlp, false);
  const ForwardVars v = forward(tape, in, lf, ff, params.config);
  return {v.scores.value(), v.log_p0.value().array().exp().matrix(),
          v.log_q.value().array().exp().matrix(), v.log_p_final.value().array().exp().matrix()};
}

ad::Var loss(ad::Var log_p_final, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != log_p_final.rows()) {
    throw std::invalid_argument("loss: one label per field required");
  }
  std::vector<int> rows, cols;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    if (labels[i] >= log_p_final.cols()) throw std::out_of_range("loss: label out of range");
    rows.push_back(static_cast<int>(i));
    cols.push_back(labels[i]);
  }
  if (rows.empty()) throw std::invalid_argument("loss: no labeled fields");
  return ad::scale(ad::mean_all(ad::pick(log_p_final, rows, cols)), -1.0);
}

double loss(const Eigen::MatrixXd& p_final, std::span<const int> labels) {
  ad::Tape tape;
  return loss(tape.constant(p_final.array().max(1e-30).log().matrix()), labels).value()(0, 0);
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& p) {
  std::vector<int> out(p.rows(), 0);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, out[r])) out[r] = static_cast<int>(c);
    }
  }
  return out;
}

namespace {

Prediction make_prediction(LabelSpace labels, const std::vector<std::string>& ids,
                           Eigen::MatrixXd p) {
  Prediction pred;
  const std::vector<int> best = argmax_rows(p);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    pred.regions.push_back(
        {ids[i], labels.label(best[i]), p(static_cast<Eigen::Index>(i), best[i])});
  }
  pred.label_space = std::move(labels);
  pred.p_final = std::move(p);
  return pred;
}

}  // namespace

Prediction predict(const Document& support, const Document& query, const ModelParams& params,
                   const RayConfig& ray_cfg) {
  return predict(prepare_pair(support, query, ray_cfg), params);
}

Prediction predict(const PairInputs& in, const ModelParams& params) {
  ForwardResult r = forward(in, params);
  return make_prediction(in.support.label_space, in.query.field_ids, std::move(r.p_final));
}

Prediction average_predictions(std::span<const Prediction* const> shots) {
  if (shots.empty()) throw NoCorrespondenceError();
  std::vector<std::string> all;
  for (const Prediction* s : shots) {
    all.insert(all.end(), s->label_space.labels().begin(), s->label_space.labels().end());
  }
  LabelSpace shared(std::move(all));

  std::map<std::string, std::pair<Eigen::RowVectorXd, int>> acc;
  std::vector<std::string> ids;
  for (const Prediction* s : shots) {
    std::vector<int> column(s->label_space.size());
    for (int k = 0; k < s->label_space.size(); ++k) {
      column[k] = shared.index_of(s->label_space.label(k));
    }
    for (std::size_t i = 0; i < s->regions.size(); ++i) {
      auto [it, fresh] = acc.try_emplace(s->regions[i].region_id,
                                         Eigen::RowVectorXd::Zero(shared.size()), 0);
      if (fresh) ids.push_back(s->regions[i].region_id);
      for (int k = 0; k < s->label_space.size(); ++k) {
        it->second.first(column[k]) += s->p_final(static_cast<Eigen::Index>(i), k);
      }
      ++it->second.second;
    }
  }

  std::vector<Eigen::RowVectorXd> rows;
  for (const auto& id : ids) {
    const auto& [sum, count] = acc.at(id);
    rows.push_back(sum / count);
  }
  Eigen::MatrixXd p(static_cast<Eigen::Index>(rows.size()), shared.size());
  for (std::size_t i = 0; i < rows.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = rows[i];
  return make_prediction(std::move(shared), ids, std::move(p));
}

Prediction fewshot_predict(std::span<const Document> supports, const Document& query,
                           const ModelParams& params, const RayConfig& ray_cfg) {
  std::vector<Prediction> shots;
  for (const auto& s : supports) {
    try {
      shots.push_back(predict(s, query, params, ray_cfg));
    } catch (const NoCorrespondenceError&) {
    }
  }
  std::vector<const Prediction*> ptrs;
  for (const auto& s : shots) ptrs.push_back(&s);
  return average_predictions(ptrs);
}

}  // namespace docfield
