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

#include "docfield/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace docfield::ad {

namespace {

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

Tape& tape_of(Var a) {
  require(a.tape != nullptr, "ad", "variable is not attached to a tape");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "ad", "variables live on different tapes");
  return *a.tape;
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), {}, false, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back({std::move(value), {}, true, {}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id].requires_grad;
  if (!value.allFinite()) throw std::domain_error("ad: non-finite value produced");
  nodes_.push_back({std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& delta) { accumulate_expr(id, delta); }

void Tape::backward(Var loss) {
  require(loss.tape == this, "backward", "loss lives on another tape");
  const Matrix& lv = nodes_[loss.id].value;
  require(lv.rows() == 1 && lv.cols() == 1, "backward", "loss must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (nodes_[loss.id].requires_grad) nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
  for (auto& n : nodes_) {
    if (n.requires_grad && n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul", "inner dimensions differ");
  const int ia = a.id, ib = b.id;
  return t.record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", "shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row must be 1 x cols(a)");
  const int ia = a.id, ir = row.id;
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {a, row}, [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate_expr(ir, g.colwise().sum());
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", "shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ib)) t.accumulate_expr(ib, -g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul", "shape mismatch");
  const int ia = a.id, ib = b.id;
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value() * s, {a},
                  [ia, s](Tape& t, const Matrix& g) { t.accumulate_expr(ia, g * s); });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, (t.value(ia).array() > 0.0).select(g, 0.0));
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  Matrix out = a.value().array().exp().matrix();
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, g.cwiseProduct(t.value(self)));
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  require((a.value().array() > 0.0).all(), "log", "argument must be positive");
  const int ia = a.id;
  return t.record(a.value().array().log().matrix(), {a}, [ia](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, g.cwiseQuotient(t.value(ia)));
  });
}

Var clamp_min(Var a, double floor) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  return t.record(a.value().cwiseMax(floor), {a}, [ia, floor](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, (t.value(ia).array() >= floor).select(g, 0.0));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.rows() == b.rows(), "concat_cols", "row counts differ");
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols();
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t.record(std::move(out), {a, b}, [ia, ib, ca](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g.leftCols(ca));
    if (t.requires_grad(ib)) t.accumulate_expr(ib, g.rightCols(g.cols() - ca));
  });
}

Var sum(Var a, int axis) {
  Tape& t = tape_of(a);
  require(axis == 0 || axis == 1, "sum", "axis must be 0 or 1");
  const int ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  if (axis == 0) {
    return t.record(a.value().colwise().sum(), {a}, [ia, r](Tape& t, const Matrix& g) {
      t.accumulate_expr(ia, g.replicate(r, 1));
    });
  }
  return t.record(a.value().rowwise().sum(), {a}, [ia, c](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, g.replicate(1, c));
  });
}

Var mean(Var a, int axis) {
  require(axis == 0 || axis == 1, "mean", "axis must be 0 or 1");
  const Eigen::Index n = axis == 0 ? a.rows() : a.cols();
  require(n > 0, "mean", "empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [ia, r, c](Tape& t, const Matrix& g) {
    t.accumulate_expr(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var mean_all(Var a) {
  require(a.value().size() > 0, "mean_all", "empty input");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  require(a.cols() > 0, "log_softmax_rows", "no columns");
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a}, [ia, self](Tape& t, const Matrix& g) {
    const Matrix p = t.value(self).array().exp().matrix();
    Matrix d = g;
    d -= (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate_expr(ia, d);
  });
}

Var gather_rows(Var a, std::span<const int> index) {
  Tape& t = tape_of(a);
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < x.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(r)) = x.row(index[r]);
  }
  std::vector<int> idx(index.begin(), index.end());
  const Eigen::Index rows = x.rows();
  return t.record(std::move(out), {a}, [ia, idx = std::move(idx), rows](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(rows, g.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) d.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    t.accumulate(ia, d);
  });
}

Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index out_rows) {
  Tape& t = tape_of(a);
  require(static_cast<Eigen::Index>(index.size()) == a.rows(), "scatter_add_rows",
          "index length must equal row count");
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(out_rows, x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < out_rows, "scatter_add_rows", "index out of range");
    out.row(index[r]) += x.row(static_cast<Eigen::Index>(r));
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix d(static_cast<Eigen::Index>(idx.size()), g.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) d.row(static_cast<Eigen::Index>(r)) = g.row(idx[r]);
    t.accumulate(ia, d);
  });
}

namespace {

Matrix reshape_row_major(const Matrix& x, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  const Eigen::Index xc = x.cols();
  for (Eigen::Index n = 0; n < rows * cols; ++n) out(n / cols, n % cols) = x(n / xc, n % xc);
  return out;
}

}  // namespace

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  Tape& t = tape_of(a);
  require(rows * cols == a.value().size(), "reshape", "element count changes");
  const int ia = a.id;
  const Eigen::Index r0 = a.rows(), c0 = a.cols();
  return t.record(reshape_row_major(a.value(), rows, cols), {a},
                  [ia, r0, c0](Tape& t, const Matrix& g) {
                    t.accumulate(ia, reshape_row_major(g, r0, c0));
                  });
}

Var pick(Var a, std::span<const int> rows, std::span<const int> cols) {
  Tape& t = tape_of(a);
  require(rows.size() == cols.size(), "pick", "rows and cols differ in length");
  const int ia = a.id;
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    require(rows[n] >= 0 && rows[n] < x.rows() && cols[n] >= 0 && cols[n] < x.cols(), "pick",
            "index out of range");
    out(static_cast<Eigen::Index>(n), 0) = x(rows[n], cols[n]);
  }
  std::vector<int> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
  const Eigen::Index xr = x.rows(), xc = x.cols();
  return t.record(std::move(out), {a},
                  [ia, r = std::move(r), c = std::move(c), xr, xc](Tape& t, const Matrix& g) {
                    Matrix d = Matrix::Zero(xr, xc);
                    for (std::size_t n = 0; n < r.size(); ++n) d(r[n], c[n]) += g(static_cast<Eigen::Index>(n), 0);
                    t.accumulate(ia, d);
                  });
}

Var log_matvec(Var a, Var q) {
  Tape& t = tape_of(a, q);
  const Eigen::Index e_count = a.rows(), k = a.cols();
  require(q.rows() == e_count && q.cols() == k * k, "log_matvec", "q must be E x K^2");
  const int ia = a.id, iq = q.id;
  const Matrix& av = a.value();
  const Matrix& qv = q.value();
  Matrix out(e_count, k);
  for (Eigen::Index e = 0; e < e_count; ++e) {
    for (Eigen::Index c = 0; c < k; ++c) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index l = 0; l < k; ++l) m = std::max(m, av(e, l) + qv(e, l * k + c));
      double s = 0;
      for (Eigen::Index l = 0; l < k; ++l) s += std::exp(av(e, l) + qv(e, l * k + c) - m);
      out(e, c) = m + std::log(s);
    }
  }
  const int self = static_cast<int>(t.size());
  return t.record(std::move(out), {a, q}, [ia, iq, self, k](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    const Matrix& qv = t.value(iq);
    const Matrix& ov = t.value(self);
    Matrix da = Matrix::Zero(av.rows(), k);
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    for (Eigen::Index e = 0; e < av.rows(); ++e) {
      for (Eigen::Index c = 0; c < k; ++c) {
        const double ge = g(e, c);
        for (Eigen::Index l = 0; l < k; ++l) {
          const double w = ge * std::exp(av(e, l) + qv(e, l * k + c) - ov(e, c));
          da(e, l) += w;
          dq(e, l * k + c) += w;
        }
      }
    }
    if (t.requires_grad(ia)) t.accumulate(ia, da);
    if (t.requires_grad(iq)) t.accumulate(iq, dq);
  });
}

}  // namespace docfield::ad
