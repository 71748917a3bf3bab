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

#include <functional>
#include <span>
#include <vector>

namespace docfield::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Records dense 2-D operations in execution order and replays them backwards.
///
/// Values are computed eagerly. A node stores a backward closure only when at
/// least one of its inputs requires a gradient, so a tape holding nothing but
/// constants doubles as a plain evaluator.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  /// Appends a node. `backward` receives the node's output gradient and must
  /// route it to the inputs through accumulate().
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void accumulate(int id, const Matrix& delta);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  /// Reverse sweep from a 1x1 node. Gradients of earlier calls are cleared.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  Matrix zero_;
};

// Primitive operations. Shapes are checked and violations throw
// std::invalid_argument.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// a (R x C) plus a 1 x C row broadcast over rows.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
/// Elementwise max(a, floor); the gradient is blocked where the floor binds.
Var clamp_min(Var a, double floor);
Var concat_cols(Var a, Var b);
/// axis 0 reduces rows (result 1 x C), axis 1 reduces columns (R x 1).
Var sum(Var a, int axis);
Var mean(Var a, int axis);
Var sum_all(Var a);
Var mean_all(Var a);
Var log_softmax_rows(Var a);
Var gather_rows(Var a, std::span<const int> index);
/// out.row(index[r]) += a.row(r); out has `out_rows` rows.
Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index out_rows);
/// Row-major reinterpretation of the same number of elements.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// (R x 1) column of a(rows[r], cols[r]).
Var pick(Var a, std::span<const int> rows, std::span<const int> cols);
/// out(e, k) = log sum_l exp(a(e, l) + q(e, l*K + k)) for a: E x K, q: E x K^2.
Var log_matvec(Var a, Var q);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return matmul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace docfield::ad
