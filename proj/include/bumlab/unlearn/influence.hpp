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

#include <stdexcept>
#include <utility>

#include "bumlab/autodiff/hvp.hpp"
#include "bumlab/model/train.hpp"

namespace bumlab::unlearn {

using ad::ScalarFn;
using ad::SolveResult;
using ad::Tensor;

/// Mean loss of `m` on `data` as a function of the masked parameters,
/// optionally plus (l2/2) ||theta||^2.
inline ScalarFn mean_loss_fn(const model::ModelParams& m, const std::vector<bool>& mask, model::LabeledData data,
                             double l2 = 0.0) {
  return [m, mask, data = std::move(data), l2](ad::Graph& g, ad::Var flat) {
    auto bound = model::bind_flat(g, m, mask, flat);
    ad::Var loss = model::loss_graph(m, bound, g.constant(data.x), data.y);
    if (l2 == 0.0) return loss;
    return ad::add(loss, ad::scale(ad::sq_norm(flat), 0.5 * l2));
  };
}

struct InfluenceConfig {
  double damping = 0.0;
  std::size_t max_iter = 500;
  double tol = 1e-10;
};

struct InfluenceValue {
  double value = 0.0;
  bool converged = false;
  double residual = 0.0;
};

/// Influence of training samples on a bias measure B:
///   I(x_i) = -grad l(x_i)^T H^-1 grad B
/// with H the Hessian of the training objective at theta. H^-1 grad B is
/// solved once and reused for every sample.
class InfluenceEstimator {
 public:
  InfluenceEstimator(ScalarFn train_objective, ScalarFn bias_measure, Tensor theta, InfluenceConfig cfg = {})
      : theta_(std::move(theta)) {
    const Tensor grad_b = ad::gradient(bias_measure, theta_);
    solve_ = ad::cg_solve(ad::hvp_operator(std::move(train_objective), theta_), grad_b, cfg.damping, cfg.max_iter,
                          cfg.tol);
  }

  const SolveResult& solve() const { return solve_; }

  InfluenceValue influence_of_gradient(const Tensor& sample_grad) const {
    if (sample_grad.size() != theta_.size()) throw ShapeError("influence: gradient length mismatch");
    return {-ad::dot(sample_grad.values(), solve_.x.values()), solve_.converged, solve_.residual_norm};
  }

  InfluenceValue influence(const ScalarFn& sample_loss) const {
    return influence_of_gradient(ad::gradient(sample_loss, theta_));
  }

 private:
  Tensor theta_;
  SolveResult solve_;
};

/// One-off influence estimate for a single sample loss.
inline InfluenceValue influence(const ScalarFn& train_objective, const Tensor& theta, const ScalarFn& sample_loss,
                                const ScalarFn& bias_measure, InfluenceConfig cfg = {}) {
  return InfluenceEstimator(train_objective, bias_measure, theta, cfg).influence(sample_loss);
}

}  // namespace bumlab::unlearn
