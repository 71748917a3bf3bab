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
#include "docfield/optim.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace docfield;
using testing::field;
using testing::landmark;
using testing::make_doc;

namespace {

ModelConfig config(int bp_steps, UnarySource unary = UnarySource::LFAttn, bool avg = false) {
  ModelConfig c;
  c.bp_steps = bp_steps;
  c.unary_source = unary;
  c.avg_before_attention = avg;
  c.hidden = {8, 8};
  return c;
}

Eigen::MatrixXd row_normalized(Eigen::MatrixXd m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  return m;
}

std::vector<DirectedEdge> with_loops(std::vector<DirectedEdge> edges, int n) {
  for (int i = 0; i < n; ++i) edges.push_back({i, i});
  std::sort(edges.begin(), edges.end());
  return edges;
}

MlpParams zero_mlp(double bias) {
  const std::vector<int> dims{16, 4, 1};
  MlpParams p = init_params(1, dims);
  for (auto& l : p.layers) l.weight.setZero();
  p.layers.back().bias.setConstant(bias);
  return p;
}

}  // namespace

TEST_CASE("BP hand example") {
  const std::vector<DirectedEdge> edges{{0, 0}, {0, 1}, {1, 1}};
  Eigen::MatrixXd p0(2, 2);
  p0 << 0.9, 0.1, 0.5, 0.5;
  Eigen::MatrixXd q(3, 4);
  q.row(0) << 0.45, 0.05, 0.05, 0.45;
  q.row(1) << 0.4, 0.1, 0.1, 0.4;
  q.row(2) << 0.45, 0.05, 0.05, 0.45;
  const Eigen::MatrixXd p1 = belief_propagation(p0, edges, q, 1);
  CHECK(std::abs(p1(1, 0) - 0.74) < 1e-12);
  CHECK(std::abs(p1(1, 1) - 0.26) < 1e-12);
  CHECK((p1.row(0) - p0.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd p2 = belief_propagation(p0, edges, q, 2);
  const double a = 0.74 * 0.37, b = 0.26 * 0.13;
  CHECK(std::abs(p2(1, 0) - a / (a + b)) < 1e-12);
}

TEST_CASE("BP identities and row-stochasticity") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto boxes = testing::random_layout(rng, 9);
    const int n = static_cast<int>(boxes.size());
    const auto edges = with_loops(visibility_edges<double>(boxes), n);
    const int k = 2 + trial % 4;
    const Eigen::MatrixXd p0 = row_normalized(testing::random_matrix(rng, n, k, 0.01, 1));
    const Eigen::MatrixXd q =
        row_normalized(testing::random_matrix(rng, static_cast<Eigen::Index>(edges.size()), k * k, 0.01, 1));

    CHECK(belief_propagation(p0, edges, q, 0) == p0);
    const Eigen::MatrixXd uq =
        Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(edges.size()), k * k, 1.0 / (k * k));
    CHECK((belief_propagation(p0, edges, uq, 3) - p0).cwiseAbs().maxCoeff() < 1e-12);
    for (int steps = 1; steps <= 6; ++steps) {
      const Eigen::MatrixXd p = belief_propagation(p0, edges, q, steps);
      CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
      CHECK((p.array() > 0).all());
    }
  }
}

TEST_CASE("BP rejects malformed graphs") {
  const Eigen::MatrixXd p0 = Eigen::MatrixXd::Constant(2, 2, 0.5);
  const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(2, 4, 0.25);
  const std::vector<DirectedEdge> no_loop{{0, 0}, {0, 1}};
  CHECK_THROWS_AS(belief_propagation(p0, no_loop, q, 1), std::invalid_argument);
  const std::vector<DirectedEdge> ok{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(belief_propagation(p0, ok, q, -1), std::invalid_argument);
  CHECK_THROWS_AS(belief_propagation(p0, ok, Eigen::MatrixXd::Constant(3, 4, 0.25), 1),
                  std::invalid_argument);
}

TEST_CASE("a confident neighbour corrects a weak field") {
  const std::vector<DirectedEdge> edges{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  Eigen::MatrixXd p0(2, 2);
  p0 << 0.95, 0.05, 0.55, 0.45;
  Eigen::MatrixXd q(4, 4);
  q.row(0) << 0.5, 0, 0, 0.5;
  q.row(1) << 0.05, 0.45, 0.45, 0.05;
  q.row(2) << 0.05, 0.45, 0.45, 0.05;
  q.row(3) << 0.5, 0, 0, 0.5;
  const std::vector<int> before = argmax_rows(p0);
  const std::vector<int> after = argmax_rows(belief_propagation(p0, edges, q, 2));
  CHECK(before == std::vector<int>{0, 0});
  CHECK(after == std::vector<int>{0, 1});
}

TEST_CASE("prototypes") {
  const Document s = make_doc("s", "t",
                              {landmark("l0", {0, 0, 10, 10}, "A"), landmark("l1", {0, 50, 10, 60}, "B"),
                               field("f0", {20, 0, 40, 10}, "x"), field("f1", {20, 20, 40, 30}, "x"),
                               field("f2", {60, 0, 80, 10}, "y")});
  const DocumentGraph g = build_graph(s, nullptr, GraphSide::Support, LabelSpace::from_support(s));
  REQUIRE(g.field_ids == std::vector<std::string>{"f0", "f2", "f1"});
  const LFPrototypes lf = lf_prototypes(g);
  REQUIRE(lf.num_labels == 3);
  REQUIRE(lf.num_landmarks == 2);
  CHECK_FALSE(lf.present(0));
  CHECK(lf.count == std::vector<int>{0, 2, 1});
  for (int j = 0; j < 2; ++j) {
    const PairFeature mean = (pair_feature(g.landmarks[j], g.fields[0]) +
                              pair_feature(g.landmarks[j], g.fields[2])) / 2;
    CHECK((lf.c.row(1 * 2 + j).transpose() - mean).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(lf.c.row(2 * 2 + j).transpose() == pair_feature(g.landmarks[j], g.fields[1]));
    CHECK(lf.c.row(j).isZero(0.0));
  }
  CHECK(lf.c.minCoeff() >= 0.0);
  CHECK(lf.c.maxCoeff() <= 1.0);

  const FFPrototypes ff = ff_prototypes(g);
  CHECK(ff.present(1, 1));
  CHECK(ff.present(2, 2));
  CHECK_FALSE(ff.present(0, 0));
  int edges_xy = 0;
  for (const auto& e : g.ff_edges) edges_xy += g.labels[e.src] == 1 && g.labels[e.dst] == 2;
  CHECK(ff.present(1, 2) == (edges_xy > 0));
  int edges_xx = 0;
  for (const auto& e : g.ff_edges) edges_xx += g.labels[e.src] == 1 && g.labels[e.dst] == 1;
  CHECK(ff.count[1 * 3 + 1] == edges_xx);
  CHECK(edges_xx >= 2);

  const Document one = make_doc("o", "t", {landmark("l", {0, 0, 5, 5}, "A"), field("f", {9, 0, 15, 5}, "x")});
  const DocumentGraph g1 = build_graph(one, nullptr, GraphSide::Support, LabelSpace::from_support(one));
  const FFPrototypes f1 = ff_prototypes(g1);
  CHECK(std::accumulate(f1.count.begin(), f1.count.end(), 0) == 1);
  REQUIRE(f1.present(1, 1));
  Eigen::RowVectorXd loop(8);
  loop << 0, 0, 1, 1, 0, 0, 1, 1;
  CHECK(f1.c.row(3) == loop);
}

TEST_CASE("multi-region prototypes average both regions") {
  const Document s = make_doc("s", "t",
                              {landmark("l", {0, 0, 10, 10}, "A"), field("a", {20, 0, 40, 10}, "addr"),
                               field("b", {20, 30, 40, 40}, "addr")});
  const DocumentGraph g = build_graph(s, nullptr, GraphSide::Support, LabelSpace::from_support(s));
  const LFPrototypes lf = lf_prototypes(g);
  const PairFeature mean =
      (pair_feature(g.landmarks[0], g.fields[0]) + pair_feature(g.landmarks[0], g.fields[1])) / 2;
  CHECK((lf.c.row(1).transpose() - mean).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("attention with a constant MLP") {
  std::mt19937_64 rng(3);
  const testing::DocPair d = testing::random_pair(rng, 3, 6, 3);
  const PairInputs in = prepare_pair(d.support, d.query);
  const int nf = in.query.num_fields();
  const Eigen::MatrixXd s = lfattn_scores(in.q_lf, nf, in.lf_protos, zero_mlp(0.7));
  CHECK((s.array() - 0.7).abs().maxCoeff() < 1e-15);
  const Eigen::MatrixXd sa = avgattn_scores(in.q_lf, nf, in.lf_protos, zero_mlp(0.7));
  CHECK((sa.array() - 0.7).abs().maxCoeff() < 1e-15);

  const Eigen::MatrixXd q = ffattn_tables(in.q_ff, in.ff_protos, zero_mlp(0.3));
  REQUIRE(q.rows() == in.query.num_ff_edges());
  REQUIRE(q.cols() == 9);
  for (Eigen::Index e = 0; e < q.rows(); ++e) {
    CHECK(std::abs(q.row(e).sum() - 1.0) < 1e-9);
    for (int p = 0; p < 9; ++p) {
      if (in.ff_protos.count[p] == 0) CHECK(q(e, p) < 1e-12);
    }
  }

  const Eigen::MatrixXd lf_one = lfattn_scores(in.q_lf, nf, in.lf_protos, zero_mlp(0.0));
  CHECK(argmax_rows(lf_one) == std::vector<int>(nf, 0));
}

TEST_CASE("absent labels score exactly the absent constant") {
  const Document s = make_doc("s", "t", {landmark("l", {0, 0, 10, 10}, "A"), field("f", {20, 0, 40, 10}, "x")});
  Document q = s;
  q.regions.push_back(field("g", {20, 30, 40, 40}, "y"));
  const ModelParams p = ModelParams::init(4, config(2));
  const PairInputs in = prepare_pair(s, q);
  const ForwardResult r = forward(in, p);
  REQUIRE(r.scores.cols() == 2);
  CHECK(r.scores.col(0).isConstant(kAbsentScore, 0.0));
  CHECK((r.p_final.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(argmax_rows(r.p_final) == std::vector<int>{1, 1});
}

TEST_CASE("K = 1 gives the trivial table and label") {
  const Document s = make_doc("s", "t", {landmark("l", {0, 0, 10, 10}, "A"),
                                         field("f", {20, 0, 40, 10}, "background"),
                                         field("g", {20, 30, 40, 40}, "background")});
  const PairInputs in = prepare_pair(s, s);
  const ModelParams p = ModelParams::init(4, config(2));
  const ForwardResult r = forward(in, p);
  CHECK(r.q.isOnes(0.0));
  CHECK(r.p_final.isOnes(1e-15));
}

TEST_CASE("single landmark: AvgAttn equals LFAttn") {
  std::mt19937_64 rng(5);
  const testing::DocPair d = testing::random_pair(rng, 1, 6, 3);
  const PairInputs in = prepare_pair(d.support, d.query);
  const ModelParams p = ModelParams::init(2, config(0));
  const Eigen::MatrixXd a = lfattn_scores(in.q_lf, in.query.num_fields(), in.lf_protos, p.lf_mlp);
  const Eigen::MatrixXd b = avgattn_scores(in.q_lf, in.query.num_fields(), in.lf_protos, p.lf_mlp);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("AvgAttn only sees the landmark mean") {
  std::mt19937_64 rng(6);
  const testing::DocPair d = testing::random_pair(rng, 2, 5, 3);
  const PairInputs in = prepare_pair(d.support, d.query);
  const ModelParams p = ModelParams::init(2, config(0));
  const int nf = in.query.num_fields();
  Eigen::MatrixXd swapped = in.q_lf;
  swapped.row(0).swap(swapped.row(nf));
  const Eigen::MatrixXd a0 = avgattn_scores(in.q_lf, nf, in.lf_protos, p.lf_mlp);
  const Eigen::MatrixXd a1 = avgattn_scores(swapped, nf, in.lf_protos, p.lf_mlp);
  CHECK((a0 - a1).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::MatrixXd l0 = lfattn_scores(in.q_lf, nf, in.lf_protos, p.lf_mlp);
  const Eigen::MatrixXd l1 = lfattn_scores(swapped, nf, in.lf_protos, p.lf_mlp);
  CHECK((l0.row(0) - l1.row(0)).cwiseAbs().maxCoeff() > 1e-6);
  CHECK(l0.bottomRows(nf - 1) == l1.bottomRows(nf - 1));
}

TEST_CASE("forward modes") {
  std::mt19937_64 rng(9);
  const testing::DocPair d = testing::random_pair(rng, 3, 7, 3);
  const PairInputs in = prepare_pair(d.support, d.query);

  const ModelParams lf = ModelParams::init(3, config(0));
  const ForwardResult r0 = forward(in, lf);
  Eigen::MatrixXd sm = r0.scores;
  for (Eigen::Index i = 0; i < sm.rows(); ++i) {
    sm.row(i) = (sm.row(i).array() - sm.row(i).maxCoeff()).exp();
    sm.row(i) /= sm.row(i).sum();
  }
  CHECK((r0.p_final - sm).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(r0.p_final == r0.p0);
  CHECK(loss(r0.p_final, in.query.labels) ==
        doctest::Approx(softmax_cross_entropy(r0.scores, in.query.labels)).epsilon(1e-12));

  const ModelParams ub = ModelParams::init(3, config(2, UnarySource::Uniform));
  const ForwardResult ru = forward(in, ub);
  CHECK((ru.p0.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
  CHECK((ru.p_final.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);

  const ModelParams full = ModelParams::init(3, config(2));
  const ForwardResult rf = forward(in, full);
  CHECK((rf.q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(rf.p0 == r0.p0);
}

TEST_CASE("loss examples") {
  const std::vector<int> y{0, 3, 1};
  CHECK(loss(Eigen::MatrixXd::Constant(3, 4, 0.25), y) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(3, 4);
  onehot(0, 0) = onehot(1, 3) = onehot(2, 1) = 1;
  CHECK(loss(onehot, y) == doctest::Approx(0.0));
  const std::vector<int> skip{-1, 3, -1};
  CHECK(loss(Eigen::MatrixXd::Constant(3, 4, 0.25), skip) == doctest::Approx(std::log(4.0)));
  const std::vector<int> none{-1, -1, -1};
  CHECK_THROWS_AS(loss(onehot, none), std::invalid_argument);
  const std::vector<int> bad{0, 4, 0};
  CHECK_THROWS_AS(loss(onehot, bad), std::out_of_range);
}

TEST_CASE("end-to-end gradients match finite differences") {
  std::mt19937_64 rng(31);
  for (const ModelConfig& cfg :
       {config(2), config(0), config(2, UnarySource::Uniform), config(1, UnarySource::LFAttn, true)}) {
    const testing::DocPair d = testing::random_pair(rng, 3, 4, 3);
    const PairInputs in = prepare_pair(d.support, d.query);
    const double err = testing::model_gradient_check(in, testing::generic_params(rng, cfg));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("similarity transform of the query") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const testing::DocPair d = testing::random_pair(rng, 3, 8, 4);
    const ModelParams p = ModelParams::init(trial, config(2));
    const double s = testing::uniform(rng, 0.5, 3);
    const double tx = testing::uniform(rng, -50, 50);
    const double ty = testing::uniform(rng, -50, 50);
    Document moved = d.query;
    for (auto& r : moved.regions) {
      r.box = {r.box.x_min * s + tx, r.box.y_min * s + ty, r.box.x_max * s + tx, r.box.y_max * s + ty};
    }
    const Prediction a = predict(d.support, d.query, p);
    const Prediction b = predict(d.support, moved, p);
    CHECK((a.p_final - b.p_final).cwiseAbs().maxCoeff() < 1e-9);
    for (std::size_t i = 0; i < a.regions.size(); ++i) CHECK(a.regions[i].label == b.regions[i].label);
  }
}

TEST_CASE("field permutation equivariance") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const testing::DocPair d = testing::random_pair(rng, 3, 8, 4);
    const ModelParams p = ModelParams::init(trial, config(2));
    Document shuffled = d.query;
    std::shuffle(shuffled.regions.begin(), shuffled.regions.end(), rng);
    const Prediction a = predict(d.support, d.query, p);
    const Prediction b = predict(d.support, shuffled, p);
    for (std::size_t i = 0; i < a.regions.size(); ++i) {
      const auto it = std::find_if(b.regions.begin(), b.regions.end(),
                                   [&](const RegionPrediction& r) { return r.region_id == a.regions[i].region_id; });
      REQUIRE(it != b.regions.end());
      CHECK(it->label == a.regions[i].label);
      CHECK(it->probability == a.regions[i].probability);
      CHECK(b.p_final.row(it - b.regions.begin()) == a.p_final.row(static_cast<Eigen::Index>(i)));
    }
  }
}

TEST_CASE("argmax ties go to the lowest index and survive row shifts") {
  Eigen::MatrixXd p(2, 3);
  p << 0.4, 0.4, 0.2, 0.1, 0.5, 0.5;
  CHECK(argmax_rows(p) == std::vector<int>{0, 1});
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd s = testing::random_matrix(rng, 5, 4);
  Eigen::MatrixXd shifted = s;
  for (Eigen::Index r = 0; r < 5; ++r) shifted.row(r).array() += testing::uniform(rng, -9, 9);
  CHECK(argmax_rows(s) == argmax_rows(shifted));
}

TEST_CASE("few-shot averaging") {
  Prediction a, b;
  a.label_space = b.label_space = LabelSpace({"background", "x"});
  a.p_final = (Eigen::MatrixXd(1, 2) << 0.6, 0.4).finished();
  b.p_final = (Eigen::MatrixXd(1, 2) << 0.2, 0.8).finished();
  a.regions = {{"r", "background", 0.6}};
  b.regions = {{"r", "x", 0.8}};
  const Document q = make_doc("q", "t", {field("r", {0, 0, 1, 1}, "x")});
  const std::vector<const Prediction*> both{&a, &b};
  const Prediction avg = average_predictions(both);
  CHECK(std::abs(avg.p_final(0, 0) - 0.4) < 1e-15);
  CHECK(std::abs(avg.p_final(0, 1) - 0.6) < 1e-15);
  CHECK(avg.regions[0].label == "x");

  Prediction c;
  c.label_space = LabelSpace({"background", "y"});
  c.p_final = (Eigen::MatrixXd(1, 2) << 0.1, 0.9).finished();
  c.regions = {{"r", "y", 0.9}};
  const std::vector<const Prediction*> mixed{&a, &c};
  const Prediction m = average_predictions(mixed);
  CHECK(m.label_space == LabelSpace({"background", "x", "y"}));
  CHECK(std::abs(m.p_final.row(0).sum() - 1.0) < 1e-15);
  CHECK(m.regions[0].label == "y");
  CHECK_THROWS_AS(average_predictions({}), NoCorrespondenceError);
}

TEST_CASE("few-shot prediction") {
  std::mt19937_64 rng(14);
  const testing::DocPair d = testing::random_pair(rng, 3, 6, 3);
  const ModelParams p = ModelParams::init(1, config(2));
  const Prediction one = predict(d.support, d.query, p);
  const std::vector<Document> single{d.support};
  const Prediction f1 = fewshot_predict(single, d.query, p);
  CHECK(f1.p_final == one.p_final);
  const std::vector<Document> same{d.support, d.support, d.support};
  const Prediction f3 = fewshot_predict(same, d.query, p);
  CHECK((f3.p_final - one.p_final).cwiseAbs().maxCoeff() < 1e-15);
  for (std::size_t i = 0; i < one.regions.size(); ++i) CHECK(f3.regions[i].label == one.regions[i].label);

  const Document stranger = make_doc("x", "t", {landmark("z", {0, 0, 1, 1}, "Nope"), field("f", {5, 5, 6, 6}, "a")});
  const std::vector<Document> mixed{stranger, d.support};
  CHECK(fewshot_predict(mixed, d.query, p).p_final == one.p_final);
  const std::vector<Document> none{stranger};
  CHECK_THROWS_AS(fewshot_predict(none, d.query, p), NoCorrespondenceError);
}
