// Copyright 2026 The bumlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bumlab/autodiff/tensor.hpp"

namespace bumlab::ad {

enum class Op {
  leaf,
  constant,
  add,
  sub,
  mul,
  scale,
  matmul,
  transpose,
  add_row,         // [n,m] + [m] broadcast over rows
  sum_rows,        // [n,m] -> [m]
  broadcast_rows,  // [m] -> [n,m]
  row_sum,         // [n,m] -> [n,1]
  broadcast_cols,  // [n,1] -> [n,m]
  broadcast_scalar,
  relu,
  sigmoid,
  exp,
  softplus,
  log_softmax,  // row-wise over the last axis
  sum,
  mean,
  sq_norm,
  slice,  // contiguous flat window, reshaped
  embed,  // inverse of slice: zero-padded placement into a larger flat tensor
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::add_row: return "add_row";
    case Op::sum_rows: return "sum_rows";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::row_sum: return "row_sum";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::broadcast_scalar: return "broadcast_scalar";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::softplus: return "softplus";
    case Op::log_softmax: return "log_softmax";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::sq_norm: return "sq_norm";
    case Op::slice: return "slice";
    case Op::embed: return "embed";
  }
  return "?";
}

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

struct Node {
  Op op = Op::constant;
  std::array<std::ptrdiff_t, 2> parents{-1, -1};
  Tensor value;
  double factor = 0.0;      // scale
  std::size_t offset = 0;   // slice / embed
  Shape aux_shape;          // slice / embed / broadcast target shape
  bool requires_grad = false;
};

/// Append-only tape of primitive operations.
///
/// Nodes are stored in creation order, so parents always precede children and
/// a reverse sweep over indices is a valid topological order for backward.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor t) { return push(Op::leaf, {-1, -1}, std::move(t), true); }
  Var constant(Tensor t) { return push(Op::constant, {-1, -1}, std::move(t), false); }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar `output` with respect to `wrt`.
  ///
  /// With `create_graph` the returned gradients are themselves differentiable
  /// nodes, which is what Hessian-vector products are built from. Nodes not
  /// reachable from `output` get zero gradients.
  std::vector<Var> gradients(Var output, std::span<const Var> wrt, bool create_graph = false);

  /// Runs backward from a scalar output and stores d(output)/d(leaf) in the
  /// grad buffer of every leaf node. Returns the leaf gradients in leaf order.
  std::vector<Tensor> backward(Var output);

  std::vector<Var> leaves() {
    std::vector<Var> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op == Op::leaf) out.push_back(Var{this, i});
    }
    return out;
  }

  // Used by the op constructors below.
  Var push(Op op, std::array<std::ptrdiff_t, 2> parents, Tensor value, bool leaf_grad = false,
           double factor = 0.0, std::size_t offset = 0, Shape aux = {}) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by ") + op_name(op));
    }
    Node n;
    n.op = op;
    n.parents = parents;
    n.value = std::move(value);
    n.factor = factor;
    n.offset = offset;
    n.aux_shape = std::move(aux);
    if (op == Op::leaf) {
      n.requires_grad = leaf_grad;
    } else if (!no_grad_) {
      for (auto p : parents) {
        if (p >= 0 && nodes_[static_cast<std::size_t>(p)].requires_grad) n.requires_grad = true;
      }
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

 private:
  friend struct Var;
  Var grad_of(std::size_t id, Var g, std::size_t which);

  std::vector<Node> nodes_;
  bool no_grad_ = false;
};

inline const Tensor& Var::value() const { return graph->node(id).value; }

namespace detail {

inline void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw std::invalid_argument("operands belong to different graphs");
}

inline void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void require_matrix(const char* op, Var a) {
  if (a.shape().size() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return Tensor(a.shape(), std::move(out));
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive constructors.

inline Var add(Var a, Var b) {
  detail::require_same_graph(a, b);
  detail::require_same_shape("add", a, b);
  auto v = detail::zip(a.value(), b.value(), [](double x, double y) { return x + y; });
  return a.graph->push(Op::add, {std::ptrdiff_t(a.id), std::ptrdiff_t(b.id)}, std::move(v));
}

inline Var sub(Var a, Var b) {
  detail::require_same_graph(a, b);
  detail::require_same_shape("sub", a, b);
  auto v = detail::zip(a.value(), b.value(), [](double x, double y) { return x - y; });
  return a.graph->push(Op::sub, {std::ptrdiff_t(a.id), std::ptrdiff_t(b.id)}, std::move(v));
}

inline Var mul(Var a, Var b) {
  detail::require_same_graph(a, b);
  detail::require_same_shape("mul", a, b);
  auto v = detail::zip(a.value(), b.value(), [](double x, double y) { return x * y; });
  return a.graph->push(Op::mul, {std::ptrdiff_t(a.id), std::ptrdiff_t(b.id)}, std::move(v));
}

inline Var scale(Var a, double c) {
  auto v = detail::map(a.value(), [c](double x) { return c * x; });
  return a.graph->push(Op::scale, {std::ptrdiff_t(a.id), -1}, std::move(v), false, c);
}

inline Var matmul(Var a, Var b) {
  detail::require_same_graph(a, b);
  detail::require_matrix("matmul", a);
  detail::require_matrix("matmul", b);
  const auto& x = a.value();
  const auto& y = b.value();
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(x.shape()) + " x " +
                     to_string(y.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yr = &y.data()[p * m];
      double* o = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) o[j] += xv * yr[j];
    }
  }
  return a.graph->push(Op::matmul, {std::ptrdiff_t(a.id), std::ptrdiff_t(b.id)},
                       Tensor({n, m}, std::move(out)));
}

inline Var transpose(Var a) {
  detail::require_matrix("transpose", a);
  const auto& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  return a.graph->push(Op::transpose, {std::ptrdiff_t(a.id), -1}, Tensor({m, n}, std::move(out)));
}

inline Var add_row(Var a, Var row) {
  detail::require_same_graph(a, row);
  detail::require_matrix("add_row", a);
  const auto& x = a.value();
  const auto& r = row.value();
  if (r.size() != x.cols()) {
    throw ShapeError("add_row: row " + to_string(r.shape()) + " does not match " +
                     to_string(x.shape()));
  }
  std::vector<double> out(x.data());
  const std::size_t m = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += r[j];
  return a.graph->push(Op::add_row, {std::ptrdiff_t(a.id), std::ptrdiff_t(row.id)},
                       Tensor(x.shape(), std::move(out)));
}

inline Var sum_rows(Var a) {
  detail::require_matrix("sum_rows", a);
  const auto& x = a.value();
  const std::size_t m = x.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += x[i * m + j];
  return a.graph->push(Op::sum_rows, {std::ptrdiff_t(a.id), -1}, Tensor({m}, std::move(out)));
}

inline Var broadcast_rows(Var row, std::size_t n) {
  const auto& r = row.value();
  const std::size_t m = r.size();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = r[j];
  return row.graph->push(Op::broadcast_rows, {std::ptrdiff_t(row.id), -1},
                         Tensor({n, m}, std::move(out)));
}

inline Var row_sum(Var a) {
  detail::require_matrix("row_sum", a);
  const auto& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += x[i * m + j];
  return a.graph->push(Op::row_sum, {std::ptrdiff_t(a.id), -1}, Tensor({n, 1}, std::move(out)));
}

inline Var broadcast_cols(Var col, std::size_t m) {
  const auto& c = col.value();
  if (c.shape().size() != 2 || c.cols() != 1) {
    throw ShapeError("broadcast_cols: expected [n,1], got " + to_string(c.shape()));
  }
  const std::size_t n = c.rows();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = c[i];
  return col.graph->push(Op::broadcast_cols, {std::ptrdiff_t(col.id), -1},
                         Tensor({n, m}, std::move(out)));
}

inline Var broadcast_scalar(Var s, const Shape& shape) {
  if (!s.value().is_scalar()) {
    throw ShapeError("broadcast_scalar: expected scalar, got " + to_string(s.shape()));
  }
  return s.graph->push(Op::broadcast_scalar, {std::ptrdiff_t(s.id), -1},
                       Tensor::filled(shape, s.value()[0]), false, 0.0, 0, shape);
}

inline Var relu(Var a) {
  auto v = detail::map(a.value(), [](double x) { return x > 0 ? x : 0.0; });
  return a.graph->push(Op::relu, {std::ptrdiff_t(a.id), -1}, std::move(v));
}

inline Var sigmoid(Var a) {
  auto v = detail::map(a.value(), detail::stable_sigmoid);
  return a.graph->push(Op::sigmoid, {std::ptrdiff_t(a.id), -1}, std::move(v));
}

inline Var exp(Var a) {
  auto v = detail::map(a.value(), [](double x) { return std::exp(x); });
  return a.graph->push(Op::exp, {std::ptrdiff_t(a.id), -1}, std::move(v));
}

inline Var softplus(Var a) {
  auto v = detail::map(a.value(), detail::stable_softplus);
  return a.graph->push(Op::softplus, {std::ptrdiff_t(a.id), -1}, std::move(v));
}

inline Var log_softmax(Var a) {
  detail::require_matrix("log_softmax", a);
  const auto& x = a.value();
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x[i * m];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[i * m + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(x[i * m + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] - lse;
  }
  return a.graph->push(Op::log_softmax, {std::ptrdiff_t(a.id), -1}, Tensor(x.shape(), std::move(out)));
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph->push(Op::sum, {std::ptrdiff_t(a.id), -1}, Tensor::scalar(s));
}

inline Var mean(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph->push(Op::mean, {std::ptrdiff_t(a.id), -1},
                       Tensor::scalar(s / static_cast<double>(a.value().size())));
}

inline Var sq_norm(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  return a.graph->push(Op::sq_norm, {std::ptrdiff_t(a.id), -1}, Tensor::scalar(s));
}

/// Flat window [offset, offset + product(shape)) of `a`, reshaped to `shape`.
inline Var slice(Var a, std::size_t offset, Shape shape) {
  const auto n = element_count(shape);
  const auto& x = a.value();
  if (offset + n > x.size()) {
    throw ShapeError("slice: window " + std::to_string(offset) + "+" + std::to_string(n) +
                     " exceeds " + to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.data().begin() + static_cast<std::ptrdiff_t>(offset + n));
  return a.graph->push(Op::slice, {std::ptrdiff_t(a.id), -1}, Tensor(shape, std::move(out)), false,
                       0.0, offset, x.shape());
}

/// Places `a` (flattened) at `offset` inside a zero tensor of shape `target`.
inline Var embed(Var a, std::size_t offset, Shape target) {
  const auto& x = a.value();
  auto out = Tensor::zeros(target);
  if (offset + x.size() > out.size()) {
    throw ShapeError("embed: " + to_string(x.shape()) + " at " + std::to_string(offset) +
                     " exceeds " + to_string(target));
  }
  std::copy(x.data().begin(), x.data().end(),
            out.data().begin() + static_cast<std::ptrdiff_t>(offset));
  return a.graph->push(Op::embed, {std::ptrdiff_t(a.id), -1}, std::move(out), false, 0.0, offset,
                       x.shape());
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// ---------------------------------------------------------------------------
// Backward.

// Gradient contribution of node `id` to its parent number `which`, given the
// gradient `g` flowing into the node. Every rule is written with graph
// primitives so the result can be differentiated again.
inline Var Graph::grad_of(std::size_t id, Var g, std::size_t which) {
  // Copy what is needed: pushing new nodes invalidates references into nodes_.
  const Op op = nodes_[id].op;
  const auto parents = nodes_[id].parents;
  const double factor = nodes_[id].factor;
  const std::size_t offset = nodes_[id].offset;
  const Shape aux = nodes_[id].aux_shape;
  const Var self{this, id};
  const Var a{this, static_cast<std::size_t>(parents[0])};
  const Var b = parents[1] >= 0 ? Var{this, static_cast<std::size_t>(parents[1])} : Var{};
  switch (op) {
    case Op::add:
      return g;
    case Op::sub:
      return which == 0 ? g : scale(g, -1.0);
    case Op::mul:
      return which == 0 ? mul(g, b) : mul(g, a);
    case Op::scale:
      return scale(g, factor);
    case Op::matmul:
      return which == 0 ? matmul(g, transpose(b)) : matmul(transpose(a), g);
    case Op::transpose:
      return transpose(g);
    case Op::add_row:
      return which == 0 ? g : sum_rows(g);
    case Op::sum_rows:
      return broadcast_rows(g, a.value().rows());
    case Op::broadcast_rows:
      return sum_rows(g);
    case Op::row_sum:
      return broadcast_cols(g, a.value().cols());
    case Op::broadcast_cols:
      return row_sum(g);
    case Op::broadcast_scalar:
      return sum(g);
    case Op::relu: {
      auto mask = detail::map(a.value(), [](double x) { return x > 0 ? 1.0 : 0.0; });
      return mul(g, constant(std::move(mask)));
    }
    case Op::sigmoid: {
      auto ones = constant(Tensor::filled(self.shape(), 1.0));
      return mul(g, mul(self, sub(ones, self)));
    }
    case Op::exp:
      return mul(g, self);
    case Op::softplus:
      return mul(g, sigmoid(a));
    case Op::log_softmax: {
      const std::size_t m = a.value().cols();
      return sub(g, mul(exp(self), broadcast_cols(row_sum(g), m)));
    }
    case Op::sum:
      return broadcast_scalar(g, a.shape());
    case Op::mean:
      return scale(broadcast_scalar(g, a.shape()), 1.0 / static_cast<double>(a.value().size()));
    case Op::sq_norm:
      return mul(broadcast_scalar(g, a.shape()), scale(a, 2.0));
    case Op::slice:
      return embed(g, offset, aux);
    case Op::embed:
      return slice(g, offset, aux);
    case Op::leaf:
    case Op::constant:
      break;
  }
  throw std::logic_error("no gradient rule for op");
}

inline std::vector<Var> Graph::gradients(Var output, std::span<const Var> wrt, bool create_graph) {
  if (output.graph != this) throw std::invalid_argument("output belongs to another graph");
  if (!output.value().is_scalar()) {
    throw ShapeError("backward requires a scalar output, got " + to_string(output.shape()));
  }
  const std::size_t end = output.id + 1;
  std::vector<std::ptrdiff_t> grad(end, -1);
  const bool saved = no_grad_;
  no_grad_ = !create_graph;
  try {
    grad[output.id] = static_cast<std::ptrdiff_t>(constant(Tensor::scalar(1.0)).id);
    for (std::size_t i = end; i-- > 0;) {
      if (grad[i] < 0 || !nodes_[i].requires_grad) continue;
      const Op op = nodes_[i].op;
      if (op == Op::leaf || op == Op::constant) continue;
      const Var g{this, static_cast<std::size_t>(grad[i])};
      for (std::size_t w = 0; w < 2; ++w) {
        const auto p = nodes_[i].parents[w];
        if (p < 0 || !nodes_[static_cast<std::size_t>(p)].requires_grad) continue;
        Var gp = grad_of(i, g, w);
        auto& slot = grad[static_cast<std::size_t>(p)];
        slot = slot < 0 ? static_cast<std::ptrdiff_t>(gp.id)
                        : static_cast<std::ptrdiff_t>(add(Var{this, static_cast<std::size_t>(slot)}, gp).id);
      }
    }
  } catch (...) {
    no_grad_ = saved;
    throw;
  }
  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    if (v.id < end && grad[v.id] >= 0) {
      out.push_back(Var{this, static_cast<std::size_t>(grad[v.id])});
    } else {
      out.push_back(constant(Tensor::zeros(v.shape())));
    }
  }
  no_grad_ = saved;
  return out;
}

inline std::vector<Tensor> Graph::backward(Var output) {
  auto ls = leaves();
  auto gs = gradients(output, ls, false);
  std::vector<Tensor> out;
  out.reserve(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) {
    Tensor g = gs[i].value();
    nodes_[ls[i].id].value.set_grad(g.data());
    g.clear_grad();
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace bumlab::ad
