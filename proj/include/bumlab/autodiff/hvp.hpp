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

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bumlab/autodiff/graph.hpp"

namespace bumlab::ad {

/// Scalar function of a flat parameter vector, expressed on a graph.
using ScalarFn = std::function<Var(Graph&, Var params)>;

/// Linear operator v -> A v on flat vectors.
using LinearOp = std::function<Tensor(const Tensor&)>;

inline Tensor gradient(const ScalarFn& f, const Tensor& params) {
  Graph g;
  Var p = g.leaf(params);
  Var out = f(g, p);
  Var wrt[] = {p};
  Tensor grad = g.gradients(out, wrt)[0].value();
  grad.clear_grad();
  return grad;
}

/// H(params) v for the Hessian of `f`, without forming H.
///
/// Computed as the gradient of <grad f, v>, i.e. a second reverse sweep over
/// the graph that produced the first gradient.
inline Tensor hessian_vector_product(const ScalarFn& f, const Tensor& params, const Tensor& v) {
  if (v.size() != params.size()) {
    throw ShapeError("hessian_vector_product: direction has " + std::to_string(v.size()) +
                     " entries, parameters have " + std::to_string(params.size()));
  }
  Graph g;
  Var p = g.leaf(params);
  Var out = f(g, p);
  Var wrt[] = {p};
  Var grad = g.gradients(out, wrt, /*create_graph=*/true)[0];
  Var dir = g.constant(v.reshaped(grad.shape()));
  Var inner = sum(mul(grad, dir));
  if (!g.node(inner.id).requires_grad) return Tensor::zeros(params.shape());
  Tensor hv = g.gradients(inner, wrt)[0].value();
  hv.clear_grad();
  return hv.reshaped(params.shape());
}

inline LinearOp hvp_operator(ScalarFn f, Tensor params) {
  return [f = std::move(f), params = std::move(params)](const Tensor& v) {
    return hessian_vector_product(f, params, v);
  };
}

struct SolveResult {
  Tensor x;
  std::size_t iterations = 0;
  double residual_norm = 0.0;
  double rhs_norm = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  // ||r_k||, starting with ||r_0||
};

/// Solves (A + damping I) x = rhs for symmetric positive definite A given only
/// products with A.
///
/// Uses the conjugate residual variant of conjugate gradients, which minimizes
/// the residual norm over the Krylov space, so the residual history is
/// non-increasing. Stops when ||r|| <= tol ||rhs|| or after max_iter products.
inline SolveResult cg_solve(const LinearOp& hvp, const Tensor& rhs, double damping,
                            std::size_t max_iter, double tol) {
  if (damping < 0) throw std::invalid_argument("cg_solve: damping must be non-negative");
  const std::size_t n = rhs.size();
  auto apply = [&](const std::vector<double>& v) {
    Tensor out = hvp(Tensor(rhs.shape(), v));
    if (out.size() != n) throw ShapeError("cg_solve: operator changed the vector length");
    std::vector<double> r(out.data());
    for (std::size_t i = 0; i < n; ++i) r[i] += damping * v[i];
    return r;
  };

  SolveResult res;
  res.rhs_norm = norm2(rhs.values());
  std::vector<double> x(n, 0.0);
  std::vector<double> r(rhs.data());
  res.residual_norm = res.rhs_norm;
  res.residual_history.push_back(res.residual_norm);
  if (res.rhs_norm == 0.0) {
    res.converged = true;
    res.x = Tensor(rhs.shape(), x);
    return res;
  }
  std::vector<double> p = r;
  std::vector<double> ar = apply(r);
  std::vector<double> ap = ar;
  double r_ar = dot(r, ar);
  const double target = tol * res.rhs_norm;

  for (std::size_t k = 0; k < max_iter; ++k) {
    const double ap_ap = dot(ap, ap);
    if (!std::isfinite(r_ar) || !std::isfinite(ap_ap)) {
      throw NumericError("cg_solve: non-finite value at iteration " + std::to_string(k));
    }
    if (ap_ap == 0.0) break;
    const double alpha = r_ar / ap_ap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    res.iterations = k + 1;
    res.residual_norm = norm2(r);
    if (!std::isfinite(res.residual_norm)) {
      throw NumericError("cg_solve: non-finite residual at iteration " + std::to_string(k));
    }
    res.residual_history.push_back(res.residual_norm);
    if (res.residual_norm <= target) {
      res.converged = true;
      break;
    }
    ar = apply(r);
    const double r_ar_next = dot(r, ar);
    if (r_ar == 0.0) break;
    const double beta = r_ar_next / r_ar;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = r[i] + beta * p[i];
      ap[i] = ar[i] + beta * ap[i];
    }
    r_ar = r_ar_next;
  }
  res.x = Tensor(rhs.shape(), std::move(x));
  return res;
}

}  // namespace bumlab::ad
