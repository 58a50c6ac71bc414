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
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bumlab/model/model.hpp"

namespace bumlab::model {

/// Feature matrix plus integer labels, one row per sample.
struct LabeledData {
  Tensor x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }

  LabeledData rows(std::span<const std::size_t> idx) const {
    if (idx.empty()) throw std::invalid_argument("LabeledData::rows: empty selection");
    const std::size_t d = x.cols();
    std::vector<double> v(idx.size() * d);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(&x.data()[idx[i] * d], d, &v[i * d]);
      labels[i] = y[idx[i]];
    }
    return {Tensor({idx.size(), d}, std::move(v)), std::move(labels)};
  }
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  }
};

/// Adam over a fixed list of tensors.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: params/grads size mismatch");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k]->data();
      const auto& g = grads[k].data();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// One gradient evaluation of `objective` over the masked slots of `m`.
/// Returns the objective value; gradients are written to `grads`.
template <typename Objective>
double masked_gradients(const ModelParams& m, const std::vector<bool>& mask, Objective&& objective,
                        std::vector<Tensor>& grads) {
  Graph g;
  auto bound = bind_params(g, m, mask);
  Var out = objective(g, std::span<const Var>(bound));
  std::vector<Var> wrt;
  for (std::size_t i = 0; i < bound.size(); ++i)
    if (mask[i]) wrt.push_back(bound[i]);
  auto gs = g.gradients(out, wrt);
  grads.clear();
  for (auto& v : gs) {
    Tensor t = v.value();
    t.clear_grad();
    grads.push_back(std::move(t));
  }
  return out.item();
}

inline std::vector<Tensor*> masked_slots(ModelParams& m, const std::vector<bool>& mask) {
  auto ss = slots(m);
  std::vector<Tensor*> out;
  for (std::size_t i = 0; i < ss.size(); ++i)
    if (mask[i]) out.push_back(ss[i]);
  return out;
}

struct TrainResult {
  ModelParams model;
  double wall_time_seconds = 0.0;
  std::size_t work_units = 0;        // samples passed through forward+backward
  std::vector<double> epoch_loss;    // mean batch loss per epoch
};

/// Seeded per-epoch shuffle: epoch e of seed s always yields the same order.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

/// Minibatch Adam on mean cross-entropy. Only trainable slots move: the base
/// weights, or just the adapters when the base is frozen.
inline TrainResult train(const ModelParams& start, const LabeledData& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty training split");
  check_width(start, data.x);
  check_labels(start, data.y, data.x.rows());
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult res{start, 0.0, 0, {}};
  ModelParams& m = res.model;
  const auto mask = param_mask(m, ParamSet::trainable);
  Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps);
  std::vector<Tensor> grads;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto order = epoch_order(data.size(), cfg.seed, e);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - off);
      auto batch = data.rows(std::span(order).subspan(off, len));
      total += masked_gradients(m, mask,
                                [&](Graph& g, std::span<const Var> bound) {
                                  return loss_graph(m, bound, g.constant(batch.x), batch.y);
                                },
                                grads);
      auto params = masked_slots(m, mask);
      opt.step(params, grads);
      res.work_units += len;
      ++batches;
    }
    res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  res.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

inline double accuracy_on(const ModelParams& m, const LabeledData& d) {
  if (d.empty()) throw std::invalid_argument("accuracy: empty set");
  auto pred = predict(m, d.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == d.y[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

}  // namespace bumlab::model
