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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "bumlab/biasgen/dataset.hpp"
#include "bumlab/model/train.hpp"
#include "bumlab/unlearn/config.hpp"

namespace bumlab::unlearn {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using model::LabeledData;
using model::ModelParams;

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_;
};

/// Retain rows for one step: a seeded draw without replacement, or all of D_r.
inline LabeledData retain_batch(const LabeledData& retain, std::size_t want, std::uint64_t seed, std::size_t step) {
  if (want == 0 || want >= retain.size()) {
    std::vector<std::size_t> all(retain.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return retain.rows(all);
  }
  auto order = model::epoch_order(retain.size(), seed, step);
  order.resize(want);
  std::sort(order.begin(), order.end());
  return retain.rows(order);
}

inline std::size_t retain_batch_size(const StrategyConfig& cfg, std::size_t n_forget, std::size_t n_retain) {
  const std::size_t want = cfg.retain_batch == 0 ? n_forget : cfg.retain_batch;
  return std::min(want == 0 ? n_retain : want, n_retain);
}

inline bool all_finite(const ModelParams& m) {
  for (const auto* t : model::slots(m))
    if (!t->all_finite()) return false;
  return true;
}

/// sum_i sum_c p_T[i, c] * log p_S[i, c] with the student's log-probabilities
/// built on the graph from its logits.
inline Var cross_term(model::Head head, Var logits, const Tensor& p_teacher) {
  Graph& g = *logits.graph;
  if (head == model::Head::softmax) return ad::sum(ad::mul(g.constant(p_teacher), ad::log_softmax(logits)));
  const std::size_t n = p_teacher.rows();
  std::vector<double> p0(n), p1(n);
  for (std::size_t i = 0; i < n; ++i) {
    p0[i] = p_teacher(i, 0);
    p1[i] = p_teacher(i, 1);
  }
  // log p1 = -softplus(-z), log p0 = -softplus(z)
  Var t1 = ad::mul(g.constant(Tensor({n, 1}, p1)), ad::softplus(ad::scale(logits, -1.0)));
  Var t0 = ad::mul(g.constant(Tensor({n, 1}, p0)), ad::softplus(logits));
  return ad::scale(ad::sum(ad::add(t1, t0)), -1.0);
}

inline double neg_entropy_sum(const Tensor& p) {
  double s = 0;
  for (double v : p.values())
    if (v > 0) s += v * std::log(v);
  return s;
}

/// Mean KL(teacher || student) over the rows of x.
inline Var mean_kl(const ModelParams& student, std::span<const Var> bound, const Tensor& x, const Tensor& p_teacher) {
  Graph& g = *bound[0].graph;
  Var logits = model::forward_graph(student, bound, g.constant(x));
  const double n = static_cast<double>(x.rows());
  Var cross = cross_term(student.head, logits, p_teacher);
  return ad::add(ad::scale(cross, -1.0 / n), g.constant(Tensor::scalar(neg_entropy_sum(p_teacher) / n)));
}

inline double mean_kl_value(const ModelParams& student, const Tensor& x, const Tensor& p_teacher) {
  Graph g;
  auto bound = model::bind_params(g, student, std::vector<bool>(model::slots(student).size(), false));
  return mean_kl(student, bound, x, p_teacher).item();
}

}  // namespace detail

/// Mean KL(teacher || student) on a sample matrix.
inline double mean_kl(const ModelParams& teacher, const ModelParams& student, const Tensor& x) {
  return detail::mean_kl_value(student, x, model::probabilities(teacher.head, model::forward(teacher, x)));
}

/// Retrain from a fresh initialization on D_r only (the gold model).
inline UnlearnResult hard_unlearn(const biasgen::DataBundle& bundle, const model::Architecture& arch,
                                  const model::TrainConfig& train_cfg, std::uint64_t init_seed) {
  const auto retain = bundle.retain_samples();
  if (retain.empty()) throw std::invalid_argument("hard_unlearn: retain set is empty");
  detail::Stopwatch sw;
  auto trained = model::train(model::init_model(arch, init_seed), biasgen::labeled(retain), train_cfg);
  UnlearnResult res;
  res.model = std::move(trained.model);
  res.work_units = static_cast<double>(trained.work_units);
  for (double l : trained.epoch_loss) res.step_log.rows.push_back({std::nan(""), l});
  res.wall_time_seconds = sw.seconds();
  return res;
}

/// theta <- theta + eta * grad(L_f - alpha L_r), full D_f batch and a seeded
/// D_r batch per step. Stops early, keeping the last finite state, when the
/// forget loss passes the divergence limit.
inline UnlearnResult gradient_ascent(const ModelParams& start, const biasgen::DataBundle& bundle,
                                     const StrategyConfig& cfg) {
  cfg.validate();
  if (!(cfg.eta > 0)) throw std::invalid_argument("gradient_ascent: eta must be > 0");
  const auto forget_s = bundle.forget_samples();
  const auto retain_s = bundle.retain_samples();
  if (forget_s.empty() || retain_s.empty()) throw std::invalid_argument("gradient_ascent: D_f and D_r must be non-empty");
  detail::Stopwatch sw;
  const auto forget = biasgen::labeled(forget_s);
  const auto retain = biasgen::labeled(retain_s);
  const std::size_t rb = detail::retain_batch_size(cfg, forget.size(), retain.size());

  UnlearnResult res;
  res.model = start;
  ModelParams& m = res.model;
  const auto mask = model::param_mask(m, model::ParamSet::trainable);
  std::vector<Tensor> grads;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rbatch = detail::retain_batch(retain, rb, cfg.seed, step);
    double lf = 0, lr = 0;
    ModelParams before = m;
    try {
      model::masked_gradients(m, mask,
                              [&](Graph& g, std::span<const Var> bound) {
                                Var f = model::loss_graph(m, bound, g.constant(forget.x), forget.y);
                                Var r = model::loss_graph(m, bound, g.constant(rbatch.x), rbatch.y);
                                lf = f.item();
                                lr = r.item();
                                return ad::sub(f, ad::scale(r, cfg.alpha));
                              },
                              grads);
      if (lf > cfg.divergence_limit) {
        res.truncated = true;
        res.note = "forget loss exceeded divergence limit";
        break;
      }
      auto params = model::masked_slots(m, mask);
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k]->data();
        const auto& gk = grads[k].data();
        for (std::size_t i = 0; i < p.size(); ++i) p[i] += cfg.eta * gk[i];
      }
      if (!detail::all_finite(m)) throw NumericError("non-finite parameter");
    } catch (const NumericError& e) {
      m = std::move(before);
      res.truncated = true;
      res.note = e.what();
      break;
    }
    res.step_log.rows.push_back({lf, lr});
    res.work_units += static_cast<double>(forget.size() + rbatch.size());
  }
  res.wall_time_seconds = sw.seconds();
  return res;
}

/// Freeze the base, attach adapters, and minimize L_r - beta L_f over the
/// adapters with Adam.
inline UnlearnResult lora_unlearn(const ModelParams& start, const biasgen::DataBundle& bundle,
                                  const StrategyConfig& cfg) {
  cfg.validate();
  const auto forget_s = bundle.forget_samples();
  const auto retain_s = bundle.retain_samples();
  if (forget_s.empty() || retain_s.empty()) throw std::invalid_argument("lora_unlearn: D_f and D_r must be non-empty");
  detail::Stopwatch sw;
  auto layers = cfg.lora_layers;
  if (layers.empty()) layers.push_back(model::final_hidden_layer(start));

  UnlearnResult res;
  res.model = model::attach_lora(start, layers, cfg.rank, cfg.seed);
  res.step_log.columns.push_back("objective");
  ModelParams& m = res.model;
  const auto forget = biasgen::labeled(forget_s);
  const auto retain = biasgen::labeled(retain_s);
  const std::size_t rb = detail::retain_batch_size(cfg, forget.size(), retain.size());
  const auto mask = model::param_mask(m, model::ParamSet::adapters);
  model::Adam opt(cfg.learning_rate);
  std::vector<Tensor> grads;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rbatch = detail::retain_batch(retain, rb, cfg.seed, step);
    double lf = 0, lr = 0;
    ModelParams before = m;
    double obj = 0;
    try {
      obj = model::masked_gradients(m, mask,
                                    [&](Graph& g, std::span<const Var> bound) {
                                      Var f = model::loss_graph(m, bound, g.constant(forget.x), forget.y);
                                      Var r = model::loss_graph(m, bound, g.constant(rbatch.x), rbatch.y);
                                      lf = f.item();
                                      lr = r.item();
                                      return ad::sub(r, ad::scale(f, cfg.beta));
                                    },
                                    grads);
      if (lf > cfg.divergence_limit) {
        res.truncated = true;
        res.note = "forget loss exceeded divergence limit";
        break;
      }
      auto params = model::masked_slots(m, mask);
      opt.step(params, grads);
      if (!detail::all_finite(m)) throw NumericError("non-finite parameter");
    } catch (const NumericError& e) {
      m = std::move(before);
      res.truncated = true;
      res.note = e.what();
      break;
    }
    res.step_log.rows.push_back({lf, lr, obj});
    res.work_units += static_cast<double>(forget.size() + rbatch.size());
  }
  res.wall_time_seconds = sw.seconds();
  return res;
}

/// Student starts at the baseline and follows the teacher on D_r while moving
/// away from it on D_f: minimize KL_r + CE_r - min(KL_f, clip).
inline UnlearnResult scrub_unlearn(const ModelParams& baseline, const ModelParams& teacher,
                                   const biasgen::DataBundle& bundle, const StrategyConfig& cfg) {
  cfg.validate();
  if (!(model::architecture(baseline) == model::architecture(teacher)) || !baseline.adapters.empty() ||
      !teacher.adapters.empty())
    throw std::invalid_argument("scrub_unlearn: teacher and student architectures differ");
  const auto forget_s = bundle.forget_samples();
  const auto retain_s = bundle.retain_samples();
  if (retain_s.empty()) throw std::invalid_argument("scrub_unlearn: D_r must be non-empty");
  detail::Stopwatch sw;
  const bool has_forget = !forget_s.empty();
  const auto retain = biasgen::labeled(retain_s);
  const LabeledData forget = has_forget ? biasgen::labeled(forget_s) : LabeledData{};
  const std::size_t rb = has_forget ? detail::retain_batch_size(cfg, forget.size(), retain.size())
                                    : std::min(cfg.retain_batch == 0 ? retain.size() : cfg.retain_batch, retain.size());
  const Tensor p_forget = has_forget ? model::probabilities(teacher.head, model::forward(teacher, forget.x)) : Tensor();

  UnlearnResult res;
  res.model = baseline;
  res.step_log.columns = {"forget_loss", "retain_loss", "kl_retain", "kl_forget", "total"};
  ModelParams& m = res.model;
  const auto mask = model::param_mask(m, model::ParamSet::base);
  model::Adam opt(cfg.learning_rate);
  std::vector<Tensor> grads;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto rbatch = detail::retain_batch(retain, rb, cfg.seed, step);
    const Tensor p_retain = model::probabilities(teacher.head, model::forward(teacher, rbatch.x));
    double kl_r = 0, ce_r = 0, kl_f = 0, lf = 0;
    ModelParams before = m;
    double total = 0;
    try {
      total = model::masked_gradients(m, mask,
                                      [&](Graph& g, std::span<const Var> bound) {
                                        Var klr = detail::mean_kl(m, bound, rbatch.x, p_retain);
                                        Var ce = model::loss_graph(m, bound, g.constant(rbatch.x), rbatch.y);
                                        kl_r = klr.item();
                                        ce_r = ce.item();
                                        Var obj = ad::add(klr, ce);
                                        if (!has_forget) return obj;
                                        Var klf = detail::mean_kl(m, bound, forget.x, p_forget);
                                        kl_f = klf.item();
                                        if (kl_f > cfg.forget_kl_clip) klf = g.constant(Tensor::scalar(cfg.forget_kl_clip));
                                        return ad::sub(obj, klf);
                                      },
                                      grads);
      if (has_forget) lf = model::loss(m, forget.x, forget.y);
      auto params = model::masked_slots(m, mask);
      opt.step(params, grads);
      if (!detail::all_finite(m)) throw NumericError("non-finite parameter");
    } catch (const NumericError& e) {
      m = std::move(before);
      res.truncated = true;
      res.note = e.what();
      break;
    }
    res.step_log.rows.push_back({lf, ce_r, kl_r, kl_f, total});
    res.work_units += static_cast<double>((has_forget ? forget.size() : 0) + rbatch.size());
  }
  res.wall_time_seconds = sw.seconds();
  return res;
}

}  // namespace bumlab::unlearn
