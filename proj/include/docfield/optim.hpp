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

/// Heavy-ball momentum: v <- mu * v + g, p <- p - lr * v.
struct OptimizerState {
  std::vector<Eigen::MatrixXd> velocity;
  double momentum = 0.9;
  std::int64_t iteration = 0;
};

/// Zero velocities shaped like `params`.
OptimizerState make_optimizer_state(std::span<const Eigen::MatrixXd* const> params,
                                    double momentum);

void sgd_momentum_step(std::span<Eigen::MatrixXd* const> params,
                       std::span<const Eigen::MatrixXd* const> grads, OptimizerState& state,
                       double lr);

/// base_lr * decay^floor(iter / period)
double lr_at(std::int64_t iter, double base_lr, double decay, std::int64_t period);

/// Mean over rows of -log softmax(logits)[label]; log-sum-exp stabilized.
double softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels);
ad::Var softmax_cross_entropy(ad::Var logits, std::span<const int> labels);

/// Mean over rows of -log_probs(r, labels[r]).
ad::Var nll_loss(ad::Var log_probs, std::span<const int> labels);

}  // namespace docfield
