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

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace docfield {

template <typename Scalar>
struct PointT {
  Scalar x{0};
  Scalar y{0};
};

/// Axis-aligned box in page pixels. Image convention: y grows downwards.
template <typename Scalar>
struct BBoxT {
  Scalar x_min{0};
  Scalar y_min{0};
  Scalar x_max{0};
  Scalar y_max{0};

  Scalar width() const { return x_max - x_min; }
  Scalar height() const { return y_max - y_min; }
  PointT<Scalar> center() const {
    return {(x_min + x_max) / Scalar(2), (y_min + y_max) / Scalar(2)};
  }
  bool contains(const PointT<Scalar>& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  bool valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min <= x_max && y_min <= y_max;
  }
  friend bool operator==(const BBoxT&, const BBoxT&) = default;
};

using Point = PointT<double>;
using BBox = BBoxT<double>;

inline constexpr int kPairFeatureDim = 8;

/// (a.x_min, a.y_min, a.x_max, a.y_max, b.x_min, ...) in joint-box units.
template <typename Scalar>
using PairFeatureT = Eigen::Matrix<Scalar, kPairFeatureDim, 1>;
using PairFeature = PairFeatureT<double>;

/// Denominator used when the joint box has zero extent along an axis.
inline constexpr double kDegenerateExtent = 1e-9;

template <typename Scalar>
BBoxT<Scalar> bounding_box(const std::array<PointT<Scalar>, 4>& quad) {
  BBoxT<Scalar> box{std::numeric_limits<Scalar>::infinity(),
                    std::numeric_limits<Scalar>::infinity(),
                    -std::numeric_limits<Scalar>::infinity(),
                    -std::numeric_limits<Scalar>::infinity()};
  for (const auto& p : quad) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("bounding_box: non-finite quad point");
    }
    box.x_min = std::min(box.x_min, p.x);
    box.y_min = std::min(box.y_min, p.y);
    box.x_max = std::max(box.x_max, p.x);
    box.y_max = std::max(box.y_max, p.y);
  }
  return box;
}

template <typename Scalar>
BBoxT<Scalar> joint_bbox(const BBoxT<Scalar>& a, const BBoxT<Scalar>& b) {
  return {std::min(a.x_min, b.x_min), std::min(a.y_min, b.y_min),
          std::max(a.x_max, b.x_max), std::max(a.y_max, b.y_max)};
}

/// Maps both boxes affinely so that their joint box becomes the unit square.
/// Order matters: the first four components describe `a`.
template <typename Scalar>
PairFeatureT<Scalar> pair_feature(const BBoxT<Scalar>& a, const BBoxT<Scalar>& b) {
  const BBoxT<Scalar> joint = joint_bbox(a, b);
  Scalar w = joint.width();
  Scalar h = joint.height();
  if (w <= Scalar(0)) w = Scalar(kDegenerateExtent);
  if (h <= Scalar(0)) h = Scalar(kDegenerateExtent);
  PairFeatureT<Scalar> f;
  f << (a.x_min - joint.x_min) / w, (a.y_min - joint.y_min) / h,
      (a.x_max - joint.x_min) / w, (a.y_max - joint.y_min) / h,
      (b.x_min - joint.x_min) / w, (b.y_min - joint.y_min) / h,
      (b.x_max - joint.x_min) / w, (b.y_max - joint.y_min) / h;
  return f;
}

/// Unit direction for an angle in degrees; exact on multiples of 90.
template <typename Scalar>
std::pair<Scalar, Scalar> ray_direction(Scalar angle_deg) {
  Scalar a = std::fmod(angle_deg, Scalar(360));
  if (a < 0) a += Scalar(360);
  if (a == Scalar(0)) return {1, 0};
  if (a == Scalar(90)) return {0, 1};
  if (a == Scalar(180)) return {-1, 0};
  if (a == Scalar(270)) return {0, -1};
  const Scalar rad = a * std::numbers::pi_v<Scalar> / Scalar(180);
  return {std::cos(rad), std::sin(rad)};
}

/// Smallest t >= 0 with origin + t * dir inside-or-on `box` (slab method).
/// An origin inside the box is a hit at distance 0.
template <typename Scalar>
std::optional<Scalar> ray_hit(const PointT<Scalar>& origin, Scalar angle_deg,
                              const BBoxT<Scalar>& box) {
  const auto [dx, dy] = ray_direction(angle_deg);
  Scalar t_enter = -std::numeric_limits<Scalar>::infinity();
  Scalar t_exit = std::numeric_limits<Scalar>::infinity();

  const auto slab = [&](Scalar o, Scalar d, Scalar lo, Scalar hi) {
    if (std::abs(d) < Scalar(1e-15)) {
      return o >= lo && o <= hi;
    }
    Scalar t0 = (lo - o) / d;
    Scalar t1 = (hi - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
    return true;
  };
  if (!slab(origin.x, dx, box.x_min, box.x_max)) return std::nullopt;
  if (!slab(origin.y, dy, box.y_min, box.y_max)) return std::nullopt;

  const Scalar t = std::max(t_enter, Scalar(0));
  if (t > t_exit) return std::nullopt;
  return t;
}

struct RayConfig {
  int ray_count = 72;
  double ray_step_deg = 5.0;
};

struct DirectedEdge {
  int src = 0;
  int dst = 0;
  friend auto operator<=>(const DirectedEdge&, const DirectedEdge&) = default;
};

/// For each box and each ray from its center, links the box to the nearest
/// other box on that ray. Output is sorted by (src, dst) and has no self edges.
template <typename Scalar>
std::vector<DirectedEdge> visibility_edges(std::span<const BBoxT<Scalar>> boxes,
                                           const RayConfig& cfg = {}) {
  if (cfg.ray_count < 1 || !(cfg.ray_step_deg > 0)) {
    throw std::invalid_argument("visibility_edges: invalid ray configuration");
  }
  std::vector<DirectedEdge> edges;
  const int n = static_cast<int>(boxes.size());
  for (int a = 0; a < n; ++a) {
    const PointT<Scalar> origin = boxes[a].center();
    for (int r = 0; r < cfg.ray_count; ++r) {
      const Scalar angle = Scalar(r) * Scalar(cfg.ray_step_deg);
      int best = -1;
      Scalar best_t = std::numeric_limits<Scalar>::infinity();
      for (int b = 0; b < n; ++b) {
        if (b == a) continue;
        const auto t = ray_hit(origin, angle, boxes[b]);
        if (t && *t < best_t) {
          best_t = *t;
          best = b;
        }
      }
      if (best >= 0) edges.push_back({a, best});
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace docfield
