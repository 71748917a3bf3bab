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

#include "docfield/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace docfield {

std::vector<int> MlpParams::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(input_dim());
  for (const auto& l : layers) dims.push_back(static_cast<int>(l.weight.cols()));
  return dims;
}

std::vector<Eigen::MatrixXd*> MlpParams::tensors() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Eigen::MatrixXd*> MlpParams::tensors() const {
  std::vector<const Eigen::MatrixXd*> out;
  for (const auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (const auto& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::MatrixXd::Zero(1, l.bias.cols())});
  }
  return z;
}

MlpParams init_params(std::uint64_t seed, std::span<const int> layer_dims) {
  if (layer_dims.size() < 2) throw std::invalid_argument("init_params: need at least two dims");
  for (int d : layer_dims) {
    if (d < 1) throw std::invalid_argument("init_params: dims must be positive");
  }
  std::mt19937_64 rng(seed);
  // 53-bit uniform in [0,1) straight from the engine so values do not depend
  // on the standard library's distribution implementation.
  const auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    DenseLayer layer{Eigen::MatrixXd(fan_in, fan_out), Eigen::MatrixXd::Zero(1, fan_out)};
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) layer.weight(i, j) = (2.0 * unit() - 1.0) * limit;
    }
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Eigen::MatrixXd mlp_apply(const MlpParams& p, const Eigen::MatrixXd& x) {
  if (x.cols() != p.input_dim()) throw std::invalid_argument("mlp_apply: input width mismatch");
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Eigen::MatrixXd next = h * p.layers[l].weight;
    next.rowwise() += p.layers[l].bias.row(0);
    if (l + 1 < p.layers.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

MlpVars place_on_tape(ad::Tape& tape, const MlpParams& p, bool trainable) {
  MlpVars v;
  for (const auto& l : p.layers) {
    if (trainable) {
      v.layers.emplace_back(tape.parameter(l.weight), tape.parameter(l.bias));
    } else {
      v.layers.emplace_back(tape.constant(l.weight), tape.constant(l.bias));
    }
  }
  return v;
}

ad::Var mlp_apply(const MlpVars& p, ad::Var x) {
  if (p.layers.empty() || x.cols() != p.layers.front().first.rows()) {
    throw std::invalid_argument("mlp_apply: input width mismatch");
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    h = ad::add_row(ad::matmul(h, p.layers[l].first), p.layers[l].second);
    if (l + 1 < p.layers.size()) h = ad::relu(h);
  }
  return h;
}

MlpParams gradients_of(const MlpVars& vars) {
  MlpParams g;
  for (const auto& [w, b] : vars.layers) g.layers.push_back({w.grad(), b.grad()});
  return g;
}

}  // namespace docfield
