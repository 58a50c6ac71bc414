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
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bumlab/biasgen/dataset.hpp"
#include "bumlab/model/train.hpp"

namespace bumlab::eval {

using ad::Graph;
using ad::Tensor;
using ad::Var;
using biasgen::Sample;
using model::ModelParams;

/// Fraction of correct predictions (argmax, or sigmoid >= 0.5).
inline double accuracy(const ModelParams& m, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("accuracy: empty sample set");
  return model::accuracy_on(m, biasgen::labeled(samples));
}

/// |P(yhat=1 | g=0) - P(yhat=1 | g=1)| for binary predictions and groups.
inline double demographic_parity_gap(std::span<const int> pred, std::span<const int> group) {
  if (pred.size() != group.size()) throw std::invalid_argument("demographic_parity_gap: length mismatch");
  double pos[2] = {0, 0}, tot[2] = {0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int g = group[i];
    if (g != 0 && g != 1) throw std::invalid_argument("demographic_parity_gap: groups must be 0/1");
    tot[g] += 1;
    pos[g] += pred[i] != 0;
  }
  if (tot[0] == 0 || tot[1] == 0)
    throw std::invalid_argument("demographic_parity_gap: undefined, only one group present");
  return std::abs(pos[0] / tot[0] - pos[1] / tot[1]);
}

/// max(|TPR0 - TPR1|, |FPR0 - FPR1|).
inline double equalized_odds_gap(std::span<const int> pred, std::span<const int> label, std::span<const int> group) {
  if (pred.size() != label.size() || pred.size() != group.size())
    throw std::invalid_argument("equalized_odds_gap: length mismatch");
  double hit[2][2] = {{0, 0}, {0, 0}}, tot[2][2] = {{0, 0}, {0, 0}};  // [group][label]
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int g = group[i];
    const int y = label[i] != 0;
    if (g != 0 && g != 1) throw std::invalid_argument("equalized_odds_gap: groups must be 0/1");
    tot[g][y] += 1;
    hit[g][y] += pred[i] != 0;
  }
  for (int g = 0; g < 2; ++g)
    for (int y = 0; y < 2; ++y)
      if (tot[g][y] == 0)
        throw std::invalid_argument("equalized_odds_gap: group " + std::to_string(g) + " has no samples of class " +
                                    std::to_string(y));
  const double tpr = std::abs(hit[0][1] / tot[0][1] - hit[1][1] / tot[1][1]);
  const double fpr = std::abs(hit[0][0] / tot[0][0] - hit[1][0] / tot[1][0]);
  return std::max(tpr, fpr);
}

/// Improvement of a gap relative to the baseline, in percent. Negative when
/// the gap widened.
inline double fairness_drop_pct(double baseline_gap, double unlearned_gap) {
  if (!(baseline_gap > 0)) throw std::invalid_argument("fairness_drop_pct: baseline gap must be positive");
  return 100.0 * (1.0 - unlearned_gap / baseline_gap);
}

/// ROC-AUC of separating members from nonmembers by score (higher score means
/// "member"). Ties count one half.
inline double auc_from_scores(std::span<const double> members, std::span<const double> nonmembers) {
  if (members.empty() || nonmembers.empty()) throw std::invalid_argument("auc: empty member or nonmember set");
  // Rank-sum form of the Mann-Whitney statistic, O(n log n).
  struct Item {
    double s;
    bool member;
  };
  std::vector<Item> all;
  all.reserve(members.size() + nonmembers.size());
  for (double s : members) all.push_back({s, true});
  for (double s : nonmembers) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.s < b.s; });
  double rank_sum = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].s == all[i].s) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // average 1-based rank
    for (std::size_t k = i; k < j; ++k)
      if (all[k].member) rank_sum += r;
    i = j;
  }
  const double nm = static_cast<double>(members.size()), nn = static_cast<double>(nonmembers.size());
  const double u = rank_sum - nm * (nm + 1) / 2;
  return u / (nm * nn);
}

/// Loss-threshold membership inference: score = -per-sample loss.
inline double mia_auc(const ModelParams& m, std::span<const Sample> members, std::span<const Sample> nonmembers) {
  if (members.empty() || nonmembers.empty()) throw std::invalid_argument("mia_auc: empty member or nonmember set");
  auto scores = [&](std::span<const Sample> s) {
    auto d = biasgen::labeled(s);
    auto l = model::per_sample_loss(m, d.x, d.y);
    for (auto& v : l) v = -v;
    return l;
  };
  return auc_from_scores(scores(members), scores(nonmembers));
}

/// d(max logit)/d(input) for every row of x. For the sigmoid head the single
/// logit is used.
inline Tensor input_gradients(const ModelParams& m, const Tensor& x) {
  model::check_width(m, x);
  Graph g;
  auto bound = model::bind_params(g, m, std::vector<bool>(model::slots(m).size(), false));
  Var in = g.leaf(x);
  Var logits = model::forward_graph(m, bound, in);
  const auto& z = logits.value();
  Tensor pick = Tensor::zeros(z.shape());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < z.cols(); ++j)
      if (z(i, j) > z(i, best)) best = j;
    pick.data()[i * z.cols() + best] = 1.0;
  }
  Var out = ad::sum(ad::mul(logits, g.constant(pick)));
  Var wrt[] = {in};
  Tensor grad = g.gradients(out, wrt)[0].value();
  grad.clear_grad();
  return grad;
}

/// Mean over samples of ||d f/d b|| / (||d f/d s|| + 1e-12), f the max logit.
inline double bias_gradient_ratio(const ModelParams& m, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("bias_gradient_ratio: empty sample set");
  const std::size_t ds = samples[0].s.size();
  auto d = biasgen::labeled(samples);
  Tensor grad = input_gradients(m, d.x);
  const std::size_t w = grad.cols();
  double total = 0;
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    double ns = 0, nb = 0;
    for (std::size_t j = 0; j < w; ++j) {
      const double v = grad(i, j);
      (j < ds ? ns : nb) += v * v;
    }
    total += std::sqrt(nb) / (std::sqrt(ns) + 1e-12);
  }
  const double r = total / static_cast<double>(grad.rows());
  if (!std::isfinite(r)) throw NumericError("bias_gradient_ratio: non-finite result");
  return r;
}

/// |d(max logit)/d x| scaled so the largest entry is 1 (all zero stays zero).
inline std::vector<double> saliency(const ModelParams& m, const std::vector<double>& x) {
  Tensor row({1, x.size()}, x);
  Tensor g = input_gradients(m, row);
  std::vector<double> out(g.data());
  double mx = 0;
  for (auto& v : out) {
    v = std::abs(v);
    mx = std::max(mx, v);
  }
  if (mx > 0)
    for (auto& v : out) v /= mx;
  return out;
}

/// Share of saliency mass on the bias block, averaged over samples.
inline double bias_saliency_mass(const ModelParams& m, std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("bias_saliency_mass: empty sample set");
  double total = 0;
  for (const auto& s : samples) {
    auto sal = saliency(m, biasgen::features(s));
    double all = 0, bias = 0;
    for (std::size_t j = 0; j < sal.size(); ++j) {
      all += sal[j];
      if (j >= s.s.size()) bias += sal[j];
    }
    total += all > 0 ? bias / all : 0.0;
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace bumlab::eval
