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

#include "docfield/optim.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace docfield {

OptimizerState make_optimizer_state(std::span<const Eigen::MatrixXd* const> params,
                                    double momentum) {
  OptimizerState s;
  s.momentum = momentum;
  for (const auto* p : params) s.velocity.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  return s;
}

void sgd_momentum_step(std::span<Eigen::MatrixXd* const> params,
                       std::span<const Eigen::MatrixXd* const> grads, OptimizerState& state,
                       double lr) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw std::invalid_argument("sgd_momentum_step: tensor count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& p = *params[i];
    const Eigen::MatrixXd& g = *grads[i];
    Eigen::MatrixXd& v = state.velocity[i];
    if (p.rows() != g.rows() || p.cols() != g.cols() || p.rows() != v.rows() ||
        p.cols() != v.cols()) {
      throw std::invalid_argument("sgd_momentum_step: shape mismatch");
    }
    v = state.momentum * v + g;
    p -= lr * v;
  }
  ++state.iteration;
}

double lr_at(std::int64_t iter, double base_lr, double decay, std::int64_t period) {
  if (iter < 0 || period <= 0) throw std::invalid_argument("lr_at: invalid iteration or period");
  return base_lr * std::pow(decay, static_cast<double>(iter / period));
}

double softmax_cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels) {
  ad::Tape tape;
  return softmax_cross_entropy(tape.constant(logits), labels).value()(0, 0);
}

ad::Var softmax_cross_entropy(ad::Var logits, std::span<const int> labels) {
  return nll_loss(ad::log_softmax_rows(logits), labels);
}

ad::Var nll_loss(ad::Var log_probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != log_probs.rows() || labels.empty()) {
    throw std::invalid_argument("nll_loss: one label per row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= log_probs.cols()) throw std::out_of_range("nll_loss: label out of range");
  }
  std::vector<int> rows(labels.size());
  std::iota(rows.begin(), rows.end(), 0);
  return ad::scale(ad::mean_all(ad::pick(log_probs, rows, labels)), -1.0);
}

}  // namespace docfield
