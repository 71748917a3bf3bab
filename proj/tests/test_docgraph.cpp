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

#include "test_support.hpp"

#include <doctest.h>

#include <set>

using namespace docfield;
using testing::field;
using testing::landmark;
using testing::make_doc;

namespace {

Document support_doc() {
  return make_doc("s", "t",
                  {landmark("l0", {10, 10, 60, 30}, "Date:"),
                   field("f0", {70, 10, 150, 30}, "date"),
                   landmark("l1", {10, 50, 60, 70}, "Total:"),
                   field("f1", {70, 50, 150, 70}, "total"),
                   field("f2", {10, 100, 150, 120}, "background")});
}

}  // namespace

TEST_CASE("LabelSpace puts background first and sorts the rest") {
  const LabelSpace ls({"total", "date", "background", "date"});
  REQUIRE(ls.size() == 3);
  CHECK(ls.label(0) == "background");
  CHECK(ls.label(1) == "date");
  CHECK(ls.label(2) == "total");
  CHECK(ls.index_of("total") == 2);
  CHECK(ls.index_of("nope") == -1);
  CHECK(LabelSpace().size() == 1);
  CHECK(LabelSpace::from_support(support_doc()) == ls);
}

TEST_CASE("match_landmarks pairs unique normalized texts") {
  const Document s = support_doc();
  Document q = s;
  q.regions[0].text = "  DATE: ";
  const LandmarkMatch m = match_landmarks(s, q);
  REQUIRE(m.pairs.size() == 2);
  CHECK(m.pairs[0].support_id == "l0");
  CHECK(m.pairs[0].query_id == "l0");
  CHECK(m.pairs[1].support_id == "l1");
  CHECK(m.dropped.empty());
}

TEST_CASE("ambiguous landmarks are dropped") {
  const Document s = make_doc("s", "t",
                              {landmark("a", {0, 0, 10, 10}, "\xE6\x97\xA5\xE6\x9C\x9F"),
                               landmark("b", {0, 20, 10, 30}, "\xE6\x97\xA5\xE6\x9C\x9F"),
                               landmark("c", {0, 40, 10, 50}, "Total"),
                               field("f", {20, 0, 30, 10}, "x")});
  const Document q = make_doc("q", "t",
                              {landmark("a", {0, 0, 10, 10}, "\xE6\x97\xA5\xE6\x9C\x9F"),
                               landmark("c", {0, 40, 10, 50}, "total"),
                               field("f", {20, 0, 30, 10}, "x")});
  const LandmarkMatch m = match_landmarks(s, q);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].support_id == "c");
  CHECK(m.dropped == std::vector<std::string>{"a", "b"});

  Document dup_query = q;
  dup_query.regions.push_back(field("g", {50, 40, 60, 50}, "y", "TOTAL"));
  CHECK_THROWS_AS(match_landmarks(s, dup_query), NoCorrespondenceError);
}

TEST_CASE("missed landmarks degrade to a partial match") {
  std::vector<TextRegion> regions;
  for (int i = 0; i < 8; ++i) {
    regions.push_back(landmark("l" + std::to_string(i), {0, i * 20.0, 10, i * 20.0 + 10},
                               "Key " + std::string(1, static_cast<char>('A' + i))));
  }
  regions.push_back(field("f", {50, 0, 60, 10}, "x"));
  const Document s = make_doc("s", "t", regions);
  Document q = s;
  q.regions.erase(q.regions.begin() + 2);
  q.regions.erase(q.regions.begin() + 5);
  const LandmarkMatch m = match_landmarks(s, q);
  CHECK(m.pairs.size() == 6);
  CHECK(m.dropped.size() == 2);
}

TEST_CASE("no correspondence") {
  const Document s = support_doc();
  const Document q = make_doc("q", "t", {field("f0", {70, 10, 150, 30}, "date", "nothing")});
  CHECK_THROWS_WITH_AS(match_landmarks(s, q), "no correspondence", NoCorrespondenceError);
  const Document bare = make_doc("b", "t", {field("f0", {0, 0, 1, 1}, "date")});
  CHECK_THROWS_AS(match_landmarks(bare, s), std::invalid_argument);
}

TEST_CASE("build_graph on both sides") {
  const Document s = support_doc();
  Document q = s;
  q.regions.push_back(landmark("extra", {200, 200, 220, 220}, "Unmatched"));
  const LandmarkMatch m = match_landmarks(s, q);
  const LabelSpace ls = LabelSpace::from_support(s);

  const DocumentGraph gs = build_graph(s, &m, GraphSide::Support, ls);
  CHECK(gs.landmark_ids == std::vector<std::string>{"l0", "l1"});
  CHECK(gs.field_ids == std::vector<std::string>{"f0", "f1", "f2"});
  CHECK(gs.num_lf_edges() == 6);
  CHECK(gs.labels == std::vector<int>{1, 2, 0});

  const DocumentGraph gq = build_graph(q, &m, GraphSide::Query, ls);
  CHECK(gq.field_ids == std::vector<std::string>{"f0", "f1", "f2", "extra"});
  CHECK(gq.labels == std::vector<int>{1, 2, 0, -1});

  for (const DocumentGraph* g : {&gs, &gq}) {
    CHECK(std::is_sorted(g->ff_edges.begin(), g->ff_edges.end()));
    std::vector<int> loops(g->num_fields(), 0);
    std::set<std::pair<int, int>> other;
    for (const auto& e : g->ff_edges) {
      if (e.src == e.dst) {
        ++loops[e.src];
      } else {
        other.insert({e.src, e.dst});
      }
    }
    CHECK(std::all_of(loops.begin(), loops.end(), [](int c) { return c == 1; }));
    CHECK(other == testing::marched_visibility(g->fields, 72, 5.0));
  }
  const DocumentGraph again = build_graph(q, &m, GraphSide::Query, ls);
  CHECK(again.ff_edges == gq.ff_edges);
}

TEST_CASE("query landmark order follows the support") {
  const Document s = support_doc();
  Document q = s;
  std::reverse(q.regions.begin(), q.regions.end());
  q.regions[4].id = "qa";
  q.regions[2].id = "qb";
  const LandmarkMatch m = match_landmarks(s, q);
  const LabelSpace ls = LabelSpace::from_support(s);
  const DocumentGraph gq = build_graph(q, &m, GraphSide::Query, ls);
  const DocumentGraph gs = build_graph(s, &m, GraphSide::Support, ls);
  REQUIRE(gq.num_landmarks() == 2);
  for (int j = 0; j < 2; ++j) {
    CHECK(q.find(gq.landmark_ids[j])->text == s.find(gs.landmark_ids[j])->text);
  }
}

TEST_CASE("feature tensors") {
  const Document s = support_doc();
  const LabelSpace ls = LabelSpace::from_support(s);
  const DocumentGraph g = build_graph(s, nullptr, GraphSide::Support, ls);
  const Eigen::MatrixXd lf = lf_feature_tensor(g);
  REQUIRE(lf.rows() == 2 * 3);
  REQUIRE(lf.cols() == 8);
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 3; ++i) {
      CHECK(lf.row(j * 3 + i).transpose() == pair_feature(g.landmarks[j], g.fields[i]));
    }
  }
  const Eigen::MatrixXd ff = ff_feature_tensor(g);
  REQUIRE(ff.rows() == g.num_ff_edges());
  Eigen::RowVectorXd loop(8);
  loop << 0, 0, 1, 1, 0, 0, 1, 1;
  for (int e = 0; e < g.num_ff_edges(); ++e) {
    const auto& d = g.ff_edges[e];
    if (d.src == d.dst) CHECK(ff.row(e) == loop);
    for (int r = 0; r < g.num_ff_edges(); ++r) {
      const auto& back = g.ff_edges[r];
      if (back.src == d.dst && back.dst == d.src && d.src != d.dst) {
        CHECK(ff.row(e).head<4>() == ff.row(r).tail<4>());
      }
    }
  }

  Document shifted = s;
  for (auto& r : shifted.regions) {
    r.box = {r.box.x_min + 100, r.box.y_min + 100, r.box.x_max + 100, r.box.y_max + 100};
  }
  const DocumentGraph gshift = build_graph(shifted, nullptr, GraphSide::Support, ls);
  CHECK((lf_feature_tensor(gshift) - lf).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("landmark box equal to field box") {
  const Document d = make_doc("d", "t",
                              {landmark("l", {5, 5, 9, 9}, "A"), field("f", {5, 5, 9, 9}, "x")});
  const DocumentGraph g = build_graph(d, nullptr, GraphSide::Support, LabelSpace::from_support(d));
  Eigen::RowVectorXd loop(8);
  loop << 0, 0, 1, 1, 0, 0, 1, 1;
  CHECK(lf_feature_tensor(g).row(0) == loop);
}

TEST_CASE("empty F is rejected") {
  const Document d = make_doc("d", "t", {landmark("l", {5, 5, 9, 9}, "A")});
  CHECK_THROWS_AS(build_graph(d, nullptr, GraphSide::Support, LabelSpace()), std::invalid_argument);
}

TEST_CASE("graph_stats arithmetic") {
  DocumentGraph g;
  g.fields.resize(26);
  g.ff_edges.resize(207);
  GraphStats s = graph_stats(g, 5);
  CHECK(s.beta == doctest::Approx(207.0 / 26));
  CHECK(s.beta == doctest::Approx(7.96).epsilon(1e-3));
  CHECK(s.reduction == doctest::Approx(1 - 207.0 / 676));
  g.ff_edges.resize(233);
  s = graph_stats(g, 5);
  CHECK(s.reduction == doctest::Approx(1 - 233.0 / 676));
  CHECK(s.reduction == doctest::Approx(0.655).epsilon(1e-3));
  CHECK(s.mem_sparse_units == doctest::Approx(233.0 * 25));
  CHECK(s.mem_full_units == doctest::Approx(676.0 * 25));

  const Document d = make_doc("d", "t", {landmark("l", {0, 0, 5, 5}, "A"), field("f", {10, 0, 20, 5}, "x")});
  const DocumentGraph one = build_graph(d, nullptr, GraphSide::Support, LabelSpace::from_support(d));
  const GraphStats s1 = graph_stats(one, 2);
  CHECK(s1.n_ff_edges == 1);
  CHECK(s1.beta == 1.0);
  CHECK(s1.reduction == 0.0);
}

TEST_CASE("beta never exceeds ray_count + 1") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<TextRegion> regions{landmark("l", {0, 0, 1, 1}, "A")};
    const auto boxes = testing::random_layout(rng, 12);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      regions.push_back(field("f" + std::to_string(i), boxes[i], "x"));
    }
    const Document d = make_doc("d", "t", regions);
    for (int rays : {4, 36, 72}) {
      const RayConfig cfg{rays, 360.0 / rays};
      const DocumentGraph g = build_graph(d, nullptr, GraphSide::Support, LabelSpace::from_support(d), cfg);
      const GraphStats s = graph_stats(g, 2);
      CHECK(s.beta <= rays + 1);
      CHECK(s.reduction >= 0.0);
      CHECK(s.reduction < 1.0);
    }
  }
}
