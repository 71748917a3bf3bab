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

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace docfield {

/// Dense layer acting on row vectors: y = x * weight + bias.
struct DenseLayer {
  Eigen::MatrixXd weight;  // in x out
  Eigen::MatrixXd bias;    // 1 x out
};

/// ReLU on hidden layers, linear output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.rows()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.cols()); }
  std::vector<int> layer_dims() const;

  /// weight0, bias0, weight1, ... in layer order.
  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;

  /// Same shapes, all zeros.
  MlpParams zeros_like() const;
};

/// Glorot-uniform weights from a seeded mt19937_64, zero biases.
/// layer_dims = {in, hidden..., out}.
MlpParams init_params(std::uint64_t seed, std::span<const int> layer_dims);

/// Applies the MLP over the last axis of an N x in batch.
Eigen::MatrixXd mlp_apply(const MlpParams& p, const Eigen::MatrixXd& x);

/// Per-layer (weight, bias) nodes of an MLP placed on a tape.
struct MlpVars {
  std::vector<std::pair<ad::Var, ad::Var>> layers;
};

MlpVars place_on_tape(ad::Tape& tape, const MlpParams& p, bool trainable);
ad::Var mlp_apply(const MlpVars& p, ad::Var x);
/// Reads gradients of a placed MLP after Tape::backward.
MlpParams gradients_of(const MlpVars& vars);

}  // namespace docfield
