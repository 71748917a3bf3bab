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
#include "docfield/document.hpp"
#include "docfield/geometry.hpp"
#include "docfield/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

namespace docfield::testing {

inline TextRegion landmark(std::string id, BBox box, std::string text) {
  return {std::move(id), std::nullopt, box, std::move(text), Role::Landmark, std::nullopt};
}

inline TextRegion field(std::string id, BBox box, std::string label, std::string text = "x") {
  return {std::move(id), std::nullopt, box, std::move(text), Role::Field, std::move(label)};
}

inline Document make_doc(std::string doc_id, std::string type_id, std::vector<TextRegion> regions,
                         double width = 1000, double height = 1000) {
  return {std::move(doc_id), std::move(type_id), width, height, std::move(regions)};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Up to `n` boxes in a `side` x `side` page, pairwise separated by a gap.
inline std::vector<BBox> random_layout(std::mt19937_64& rng, int n, double side = 100) {
  std::vector<BBox> boxes;
  for (int attempt = 0; attempt < 2000 && static_cast<int>(boxes.size()) < n; ++attempt) {
    const double w = uniform(rng, 2, 25);
    const double h = uniform(rng, 2, 12);
    const double x = uniform(rng, 0, side - w);
    const double y = uniform(rng, 0, side - h);
    const BBox b{x, y, x + w, y + h};
    const bool clear = std::none_of(boxes.begin(), boxes.end(), [&](const BBox& o) {
      return b.x_min < o.x_max + 0.5 && o.x_min < b.x_max + 0.5 && b.y_min < o.y_max + 0.5 &&
             o.y_min < b.y_max + 0.5;
    });
    if (clear) boxes.push_back(b);
  }
  return boxes;
}

/// Euclidean distance from p to a box, 0 inside.
inline double box_distance(const Point& p, const BBox& b) {
  const double dx = std::max({b.x_min - p.x, 0.0, p.x - b.x_max});
  const double dy = std::max({b.y_min - p.y, 0.0, p.y - b.y_max});
  return std::hypot(dx, dy);
}

/// Ray-marching oracle for visibility edges. Each ray advances by the distance
/// to the nearest other box, so it cannot step over one; the first box whose
/// distance drops below `eps` is the hit.
inline std::set<std::pair<int, int>> marched_visibility(const std::vector<BBox>& boxes,
                                                        int ray_count, double step_deg) {
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  for (const auto& b : boxes) {
    lo_x = std::min(lo_x, b.x_min);
    lo_y = std::min(lo_y, b.y_min);
    hi_x = std::max(hi_x, b.x_max);
    hi_y = std::max(hi_y, b.y_max);
  }
  const double scale = std::max(hi_x - lo_x, hi_y - lo_y);
  const double eps = 1e-10 * scale;
  std::set<std::pair<int, int>> edges;
  const int n = static_cast<int>(boxes.size());
  for (int a = 0; a < n; ++a) {
    const Point o = boxes[a].center();
    for (int r = 0; r < ray_count; ++r) {
      const double rad = r * step_deg * std::acos(-1.0) / 180.0;
      const double dx = std::cos(rad), dy = std::sin(rad);
      double t = 0;
      while (true) {
        const Point p{o.x + t * dx, o.y + t * dy};
        if (p.x < lo_x - 1 || p.x > hi_x + 1 || p.y < lo_y - 1 || p.y > hi_y + 1) break;
        double nearest = std::numeric_limits<double>::infinity();
        int who = -1;
        for (int b = 0; b < n; ++b) {
          if (b == a) continue;
          const double d = box_distance(p, boxes[b]);
          if (d < nearest) {
            nearest = d;
            who = b;
          }
        }
        if (who < 0) break;
        if (nearest < eps) {
          edges.insert({a, who});
          break;
        }
        t += std::max(nearest, eps * 0.5);
      }
    }
  }
  return edges;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double lo = -1, double hi = 1) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

/// |a - n| / max(|a|, |n|); pairs where both are below 1e-8 compare absolutely.
inline double relative_error(double analytic, double numeric) {
  const double d = std::max(std::abs(analytic), std::abs(numeric));
  return d < 1e-8 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / d;
}

using ScalarFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest relative error between tape gradients of `f` and central differences.
/// `at` receives the analytic gradient of the worst entry.
inline double gradient_check(const std::vector<Eigen::MatrixXd>& inputs, const ScalarFn& f,
                             double h = 1e-5, double* at = nullptr) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.parameter(m));
  tape.backward(f(tape, vars));

  const auto eval = [&](const std::vector<Eigen::MatrixXd>& xs) {
    ad::Tape t;
    std::vector<ad::Var> vs;
    for (const auto& m : xs) vs.push_back(t.constant(m));
    return f(t, vs).value()(0, 0);
  };
  double worst = 0;
  std::vector<Eigen::MatrixXd> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double x = inputs[k].data()[i];
      probe[k].data()[i] = x + h;
      const double up = eval(probe);
      probe[k].data()[i] = x - h;
      const double down = eval(probe);
      probe[k].data()[i] = x;
      const double a = vars[k].grad().data()[i];
      const double e = relative_error(a, (up - down) / (2 * h));
      if (e > worst) {
        worst = e;
        if (at) *at = a;
      }
    }
  }
  return worst;
}

struct DocPair {
  Document support;
  Document query;
};

/// Support with `n_landmarks` landmarks and `n_fields` fields cycling through
/// `n_labels` labels; the query is the same layout with every box jittered.
inline DocPair random_pair(std::mt19937_64& rng, int n_landmarks, int n_fields, int n_labels) {
  std::vector<BBox> boxes;
  while (static_cast<int>(boxes.size()) < n_landmarks + n_fields) {
    boxes = random_layout(rng, n_landmarks + n_fields);
  }
  DocPair out;
  out.support = make_doc("s", "t", {});
  out.query = make_doc("q", "t", {});
  for (int i = 0; i < n_landmarks + n_fields; ++i) {
    const BBox& b = boxes[i];
    const BBox moved{b.x_min + uniform(rng, -0.2, 0.2), b.y_min + uniform(rng, -0.2, 0.2),
                     b.x_max + uniform(rng, -0.2, 0.2), b.y_max + uniform(rng, -0.2, 0.2)};
    if (i < n_landmarks) {
      const std::string text = "Key " + std::to_string(i);
      out.support.regions.push_back(landmark("l" + std::to_string(i), b, text));
      out.query.regions.push_back(landmark("l" + std::to_string(i), moved, text));
    } else {
      const int f = i - n_landmarks;
      const std::string label = f % n_labels == 0 ? "background" : "label" + std::to_string(f % n_labels);
      out.support.regions.push_back(field("f" + std::to_string(f), b, label));
      out.query.regions.push_back(field("f" + std::to_string(f), moved, label));
    }
  }
  return out;
}

/// Fresh parameters with random biases, so no ReLU sits exactly on its kink.
inline ModelParams generic_params(std::mt19937_64& rng, const ModelConfig& cfg) {
  ModelParams p = ModelParams::init(rng(), cfg);
  for (MlpParams* m : {&p.lf_mlp, &p.ff_mlp}) {
    for (auto& l : m->layers) l.bias = random_matrix(rng, 1, l.bias.cols(), -0.5, 0.5);
  }
  return p;
}

/// Largest relative gradient error of CE(P_final) over every MLP parameter.
inline double model_gradient_check(const PairInputs& in, const ModelParams& p, double* at = nullptr) {
  std::vector<Eigen::MatrixXd> inputs;
  for (const auto* m : p.tensors()) inputs.push_back(*m);
  const std::size_t n_lf = p.lf_mlp.tensors().size();
  return gradient_check(inputs, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    MlpVars lf, ff;
    for (std::size_t l = 0; l < n_lf; l += 2) lf.layers.push_back({v[l], v[l + 1]});
    for (std::size_t l = n_lf; l < v.size(); l += 2) ff.layers.push_back({v[l], v[l + 1]});
    return loss(forward(t, in, lf, ff, p.config).log_p_final, in.query.labels);
  }, 1e-5, at);
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("docfield_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace docfield::testing
