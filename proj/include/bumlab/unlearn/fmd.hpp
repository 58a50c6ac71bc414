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
#include <span>
#include <stdexcept>
#include <string>

#include "bumlab/biasgen/dataset.hpp"
#include "bumlab/unlearn/influence.hpp"
#include "bumlab/unlearn/strategies.hpp"

namespace bumlab::unlearn {

struct NewtonStep {
  Tensor theta;
  double step_norm = 0.0;  // max-norm of the applied step
  bool fallback = false;
  SolveResult solve;
  std::string note;
};

/// theta - (H + damping I)^-1 grad f(theta), with H applied through
/// Hessian-vector products. If the solver fails or does not converge, the
/// step becomes grad / damping.
inline NewtonStep newton_step(const ScalarFn& f, const Tensor& theta, double damping, std::size_t max_iter = 500,
                              double tol = 1e-12) {
  const Tensor g = ad::gradient(f, theta);
  NewtonStep out;
  Tensor step;
  try {
    out.solve = ad::cg_solve(ad::hvp_operator(f, theta), g, damping, max_iter, tol);
    if (!out.solve.converged) throw NumericError("solver did not converge, residual " + std::to_string(out.solve.residual_norm));
    step = out.solve.x;
  } catch (const NumericError& e) {
    if (!(damping > 0)) throw NumericError(std::string("newton_step: ") + e.what() + " and no damping for fallback");
    out.fallback = true;
    out.note = e.what();
    step = g;
    for (auto& v : step.data()) v /= damping;
  }
  out.theta = theta;
  for (std::size_t i = 0; i < step.size(); ++i) out.theta.data()[i] -= step.data()[i];
  out.step_norm = ad::max_abs(step.values());
  return out;
}

/// One Newton step on the mean counterfactual loss, over the head (or all
/// base) parameters, then optional fine-tuning on D_c.
///
/// With `contrastive_weight` > 0 and `originals` given (originals[i] is the
/// biased sample D_c[i] was made from), fine-tuning also pulls the embedding
/// of each original towards that of its counterfactual.
inline UnlearnResult fmd_unlearn(const ModelParams& start, std::span<const biasgen::Sample> counterfactual,
                                 const StrategyConfig& cfg, std::span<const biasgen::Sample> originals = {}) {
  cfg.validate();
  if (counterfactual.empty()) throw std::invalid_argument("fmd_unlearn: counterfactual set is empty");
  if (!originals.empty() && originals.size() != counterfactual.size())
    throw std::invalid_argument("fmd_unlearn: originals and counterfactuals differ in length");
  detail::Stopwatch sw;
  const auto dc = biasgen::labeled(counterfactual);

  UnlearnResult res;
  res.model = start;
  res.step_log.columns = {"forget_loss", "retain_loss", "counterfactual_loss", "step_norm"};
  ModelParams& m = res.model;
  const auto mask = model::param_mask(m, cfg.full_hessian ? model::ParamSet::base : model::ParamSet::head);
  const auto f = mean_loss_fn(m, mask, dc);
  const double before = model::loss(m, dc.x, dc.y);
  auto step = newton_step(f, model::flatten(m, mask), cfg.damping, cfg.cg_max_iter, cfg.cg_tol);
  model::unflatten(m, mask, step.theta);
  res.fallback = step.fallback;
  res.note = step.note;
  // Each solver iteration is one Hessian-vector product over D_c.
  res.work_units = static_cast<double>(dc.size() * (1 + 2 * step.solve.iterations + 1));
  res.step_log.rows.push_back({std::nan(""), std::nan(""), before, step.step_norm});

  if (cfg.head_finetune_steps > 0) {
    const bool contrastive = cfg.contrastive_weight > 0 && !originals.empty();
    const auto ft_mask = model::param_mask(m, contrastive ? model::ParamSet::base : model::ParamSet::head);
    const auto orig = contrastive ? biasgen::labeled(originals) : LabeledData{};
    model::Adam opt(cfg.finetune_lr);
    std::vector<Tensor> grads;
    for (std::size_t s = 0; s < cfg.head_finetune_steps; ++s) {
      double ce = 0;
      model::masked_gradients(m, ft_mask,
                              [&](Graph& g, std::span<const Var> bound) {
                                Var loss = model::loss_graph(m, bound, g.constant(dc.x), dc.y);
                                ce = loss.item();
                                if (!contrastive) return loss;
                                Var ea = model::embedding_graph(m, bound, g.constant(orig.x));
                                Var eb = model::embedding_graph(m, bound, g.constant(dc.x));
                                Var align = ad::scale(ad::sq_norm(ad::sub(ea, eb)), 1.0 / static_cast<double>(dc.size()));
                                return ad::add(loss, ad::scale(align, cfg.contrastive_weight));
                              },
                              grads);
      auto params = model::masked_slots(m, ft_mask);
      opt.step(params, grads);
      res.step_log.rows.push_back({std::nan(""), std::nan(""), ce, 0.0});
      res.work_units += static_cast<double>(dc.size() * (contrastive ? 2 : 1));
    }
  }
  res.wall_time_seconds = sw.seconds();
  return res;
}

}  // namespace bumlab::unlearn
