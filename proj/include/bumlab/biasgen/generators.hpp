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
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bumlab/biasgen/dataset.hpp"

namespace bumlab::biasgen {

// Every generator draws class-conditional Gaussian semantic features
// s ~ N(mu_y, I) and a bias block b whose relation to the label is the
// scenario's shortcut. Output is a pure function of (config, seed).

struct PatchConfig {
  std::size_t n_per_class = 1000;
  std::size_t num_classes = 10;
  int target_class = 2;
  double fraction = 0.5;       // share of target-class training samples that get the marker
  double marker_value = 3.0;   // every b coordinate of a marked sample
  std::size_t semantic_dim = 16;
  std::size_t bias_dim = 4;
  double class_separation = 0.4;  // sd of the class means

  nlohmann::json to_json() const {
    return {{"n_per_class", n_per_class}, {"num_classes", num_classes}, {"target_class", target_class},
            {"fraction", fraction},       {"marker_value", marker_value}, {"semantic_dim", semantic_dim},
            {"bias_dim", bias_dim},       {"class_separation", class_separation}};
  }
};

struct AttributeConfig {
  std::size_t n = 2000;
  double corr_ratio = 6.0;  // positives in group 0 per positive in group 1
  std::size_t semantic_dim = 8;
  std::size_t bias_dim = 4;
  double class_separation = 1.5;  // distance between the two label means
  double group_signal = 1.0;      // |mean| of b for each group

  nlohmann::json to_json() const {
    return {{"n", n},
            {"corr_ratio", corr_ratio},
            {"semantic_dim", semantic_dim},
            {"bias_dim", bias_dim},
            {"class_separation", class_separation},
            {"group_signal", group_signal}};
  }
};

struct PoseConfig {
  std::size_t n = 3000;
  std::size_t num_classes = 4;
  double skew = 0.8;
  std::size_t semantic_dim = 8;
  std::size_t bias_dim = 3;  // noise coordinates; the scale scalar is appended
  double class_separation = 0.8;

  nlohmann::json to_json() const {
    return {{"n", n},       {"num_classes", num_classes}, {"skew", skew}, {"semantic_dim", semantic_dim},
            {"bias_dim", bias_dim}, {"class_separation", class_separation}};
  }
};

namespace detail {

inline std::vector<std::vector<double>> class_means(std::size_t k, std::size_t d, double sd,
                                                    std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<std::vector<double>> mu(k, std::vector<double>(d));
  for (auto& m : mu)
    for (auto& v : m) v = nd(rng);
  return mu;
}

inline std::vector<double> gaussian_around(const std::vector<double>& mean, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(mean);
  for (auto& v : out) v += nd(rng);
  return out;
}

inline std::vector<double> noise(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(d);
  for (auto& v : out) v = nd(rng);
  return out;
}

}  // namespace detail

/// Marker shortcut: a fraction of the target class carries a constant b-block.
///
/// D_f is the marked training samples, D_r the rest, and group is the marker
/// flag. The test split marks half of every class (so the target class has
/// marked and unmarked samples in equal number and both groups contain
/// positives and negatives).
inline DataBundle gen_patch_bias(const PatchConfig& cfg, std::uint64_t seed) {
  if (!(cfg.fraction >= 0.0 && cfg.fraction <= 1.0))
    throw std::invalid_argument("gen_patch_bias: fraction must lie in [0, 1], got " +
                                std::to_string(cfg.fraction));
  if (cfg.num_classes < 2) throw std::invalid_argument("gen_patch_bias: need at least two classes");
  if (cfg.target_class < 0 || static_cast<std::size_t>(cfg.target_class) >= cfg.num_classes)
    throw std::invalid_argument("gen_patch_bias: target class out of range");
  if (cfg.n_per_class < 1 || cfg.semantic_dim < 1 || cfg.bias_dim < 1)
    throw std::invalid_argument("gen_patch_bias: sizes must be positive");

  std::mt19937_64 rng(seed);
  const std::size_t k = cfg.num_classes;
  auto mu = detail::class_means(k, cfg.semantic_dim, cfg.class_separation, rng);

  // Interleave classes so any prefix is (near) class-balanced.
  std::vector<Sample> all;
  all.reserve(k * cfg.n_per_class);
  for (std::size_t j = 0; j < cfg.n_per_class; ++j)
    for (std::size_t c = 0; c < k; ++c) {
      Sample s;
      s.s = detail::gaussian_around(mu[c], rng);
      s.b = detail::noise(cfg.bias_dim, rng);
      s.label = static_cast<int>(c);
      all.push_back(std::move(s));
    }

  const auto counts = split_counts(all.size());
  DataBundle out;
  out.scenario = Scenario::patch;
  out.semantic_dim = cfg.semantic_dim;
  out.bias_dim = cfg.bias_dim;
  out.num_classes = k;
  out.positive_classes = {cfg.target_class};
  out.protected_group = 1;
  out.generator_config = cfg.to_json();
  out.seed = seed;
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(counts.train));
  out.val.assign(all.begin() + static_cast<std::ptrdiff_t>(counts.train),
                 all.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.val));
  out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.val), all.end());

  auto mark = [&](Sample& s) {
    std::fill(s.b.begin(), s.b.end(), cfg.marker_value);
    s.bias_flag = true;
    s.group = 1;
  };

  auto mark_fraction = [&](std::vector<Sample>& split) {
    std::size_t n_target = 0;
    for (const auto& s : split) n_target += s.label == cfg.target_class;
    const auto n_mark = static_cast<std::size_t>(std::floor(cfg.fraction * static_cast<double>(n_target)));
    std::size_t marked = 0;
    for (auto& s : split) {
      if (marked == n_mark) break;
      if (s.label == cfg.target_class) {
        mark(s);
        ++marked;
      }
    }
  };
  mark_fraction(out.train);
  mark_fraction(out.val);

  std::vector<std::size_t> seen(k, 0), total(k, 0);
  for (const auto& s : out.test) ++total[static_cast<std::size_t>(s.label)];
  for (auto& s : out.test) {
    auto c = static_cast<std::size_t>(s.label);
    if (seen[c] < total[c] / 2) mark(s);
    ++seen[c];
  }

  for (std::size_t i = 0; i < out.train.size(); ++i)
    (out.train[i].bias_flag ? out.forget : out.retain).push_back(i);
  return out;
}

inline DataBundle gen_patch_bias(std::size_t n_per_class, std::size_t k, int target_class,
                                 double fraction, double marker_value, std::uint64_t seed) {
  PatchConfig cfg;
  cfg.n_per_class = n_per_class;
  cfg.num_classes = k;
  cfg.target_class = target_class;
  cfg.fraction = fraction;
  cfg.marker_value = marker_value;
  return gen_patch_bias(cfg, seed);
}

namespace detail {

struct CellCounts {
  std::size_t pos[2];
  std::size_t neg[2];
};

// Per split: equal group sizes, half the samples positive, and positives split
// corr_ratio : 1 between group 0 and group 1.
inline bool attribute_cells(std::size_t n_split, double ratio, CellCounts& out) {
  const std::size_t g0 = n_split / 2, g1 = n_split - g0;
  const std::size_t p = n_split / 2;
  const auto p0 = static_cast<std::size_t>(std::llround(static_cast<double>(p) * ratio / (ratio + 1.0)));
  if (p0 > p) return false;
  const std::size_t p1 = p - p0;
  if (p1 < 1 || p0 < 1 || p0 >= g0 || p1 >= g1) return false;
  out = {{p0, p1}, {g0 - p0, g1 - p1}};
  return true;
}

inline bool attribute_feasible(std::size_t n, double ratio) {
  const auto c = split_counts(n);
  CellCounts tmp;
  return attribute_cells(c.train, ratio, tmp) && attribute_cells(c.val, ratio, tmp) &&
         attribute_cells(c.test, ratio, tmp);
}

}  // namespace detail

/// Smallest sample count for which every split can realize `ratio`.
inline std::size_t attribute_min_n(double ratio) {
  for (std::size_t n = 4; n < (std::size_t{1} << 32); n += (n < 4096 ? 1 : n / 512)) {
    if (detail::attribute_feasible(n, ratio)) return n;
  }
  throw std::invalid_argument("corr_ratio too large to realize");
}

/// Attribute shortcut: a binary label that is far more often positive in
/// group 0. D_f is the over-represented (group 0, positive) training cell.
inline DataBundle gen_attribute_bias(const AttributeConfig& cfg, std::uint64_t seed) {
  if (!(cfg.corr_ratio >= 1.0)) throw std::invalid_argument("gen_attribute_bias: corr_ratio must be >= 1");
  if (cfg.semantic_dim < 1 || cfg.bias_dim < 1) throw std::invalid_argument("gen_attribute_bias: sizes must be positive");
  if (!detail::attribute_feasible(cfg.n, cfg.corr_ratio)) {
    throw std::invalid_argument("gen_attribute_bias: n=" + std::to_string(cfg.n) +
                                " cannot realize corr_ratio " + std::to_string(cfg.corr_ratio) +
                                " in every split; minimum feasible n is " +
                                std::to_string(attribute_min_n(cfg.corr_ratio)));
  }
  std::mt19937_64 rng(seed);
  const double half = 0.5 * cfg.class_separation / std::sqrt(static_cast<double>(cfg.semantic_dim));
  std::vector<std::vector<double>> mu = {std::vector<double>(cfg.semantic_dim, -half),
                                         std::vector<double>(cfg.semantic_dim, half)};

  auto make_split = [&](std::size_t n_split) {
    detail::CellCounts cells;
    detail::attribute_cells(n_split, cfg.corr_ratio, cells);
    std::vector<Sample> out;
    for (int g = 0; g < 2; ++g)
      for (int y = 1; y >= 0; --y) {
        const std::size_t cnt = y ? cells.pos[g] : cells.neg[g];
        for (std::size_t i = 0; i < cnt; ++i) {
          Sample s;
          s.s = detail::gaussian_around(mu[static_cast<std::size_t>(y)], rng);
          s.b = detail::noise(cfg.bias_dim, rng);
          for (auto& v : s.b) v += g == 0 ? cfg.group_signal : -cfg.group_signal;
          s.label = y;
          s.group = g;
          out.push_back(std::move(s));
        }
      }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  };

  const auto counts = split_counts(cfg.n);
  DataBundle out;
  out.scenario = Scenario::attribute;
  out.semantic_dim = cfg.semantic_dim;
  out.bias_dim = cfg.bias_dim;
  out.num_classes = 2;
  out.positive_classes = {1};
  out.protected_group = 1;
  out.generator_config = cfg.to_json();
  out.seed = seed;
  out.train = make_split(counts.train);
  out.val = make_split(counts.val);
  out.test = make_split(counts.test);
  for (std::size_t i = 0; i < out.train.size(); ++i) {
    const auto& s = out.train[i];
    const bool f = s.group == 0 && s.label == 1;
    if (f) out.train[i].bias_flag = true;
    (f ? out.forget : out.retain).push_back(i);
  }
  return out;
}

inline DataBundle gen_attribute_bias(std::size_t n, double corr_ratio, std::uint64_t seed) {
  AttributeConfig cfg;
  cfg.n = n;
  cfg.corr_ratio = corr_ratio;
  return gen_attribute_bias(cfg, seed);
}

/// Classes over-represented at small scale (the far bin) under pose skew.
inline std::vector<int> pose_favored_classes(std::size_t k) {
  std::vector<int> out;
  for (std::size_t c = 0; c < (k + 1) / 2; ++c) out.push_back(static_cast<int>(c));
  return out;
}

/// Pose shortcut: a log-normal "scale" scalar appended to b, binned by
/// training terciles into close (0), mid (1) and far (2). With probability
/// `skew` a sample's scale is drawn from a class-dependent distribution that
/// pushes favored classes to the far bin. D_f is the far bin.
inline DataBundle gen_pose_bias(const PoseConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) throw std::invalid_argument("gen_pose_bias: need at least two classes");
  if (!(cfg.skew >= 0.0 && cfg.skew <= 1.0)) throw std::invalid_argument("gen_pose_bias: skew must lie in [0, 1]");
  if (cfg.n < 3) throw std::invalid_argument("gen_pose_bias: n too small");
  std::mt19937_64 rng(seed);
  const std::size_t k = cfg.num_classes;
  auto mu = detail::class_means(k, cfg.semantic_dim, cfg.class_separation, rng);
  const auto favored = pose_favored_classes(k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> base(0.0, 1.0), far(-1.5, 0.5), near(1.0, 0.5);

  std::vector<Sample> all;
  all.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Sample s;
    s.label = static_cast<int>(i % k);
    s.s = detail::gaussian_around(mu[i % k], rng);
    s.b = detail::noise(cfg.bias_dim, rng);
    const bool fav = std::find(favored.begin(), favored.end(), s.label) != favored.end();
    const double log_scale = u(rng) < cfg.skew ? (fav ? far(rng) : near(rng)) : base(rng);
    s.b.push_back(std::exp(log_scale));
    all.push_back(std::move(s));
  }
  std::shuffle(all.begin(), all.end(), rng);

  const auto counts = split_counts(all.size());
  DataBundle out;
  out.scenario = Scenario::pose;
  out.semantic_dim = cfg.semantic_dim;
  out.bias_dim = cfg.bias_dim + 1;
  out.num_classes = k;
  out.positive_classes = favored;
  out.protected_group = 2;
  out.generator_config = cfg.to_json();
  out.seed = seed;
  out.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(counts.train));
  out.val.assign(all.begin() + static_cast<std::ptrdiff_t>(counts.train),
                 all.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.val));
  out.test.assign(all.begin() + static_cast<std::ptrdiff_t>(counts.train + counts.val), all.end());

  // Terciles by descending scale on the training split.
  const std::size_t n = out.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return out.train[a].b.back() > out.train[b].b.back(); });
  for (std::size_t r = 0; r < n; ++r) out.train[order[r]].group = static_cast<int>(3 * r / n);
  double cut01 = -1, cut12 = -1;  // smallest scale in bins 0 and 1
  for (std::size_t r = 0; r < n; ++r) {
    const auto& s = out.train[order[r]];
    if (s.group == 0) cut01 = s.b.back();
    if (s.group == 1) cut12 = s.b.back();
  }
  auto bin_of = [&](double scale) { return scale >= cut01 ? 0 : (scale >= cut12 ? 1 : 2); };
  for (auto* split : {&out.val, &out.test})
    for (auto& s : *split) s.group = bin_of(s.b.back());
  for (auto* split : {&out.train, &out.val, &out.test})
    for (auto& s : *split) s.bias_flag = s.group == 2;

  for (std::size_t i = 0; i < n; ++i) (out.train[i].group == 2 ? out.forget : out.retain).push_back(i);
  return out;
}

inline DataBundle gen_pose_bias(std::size_t n, std::size_t k, double skew, std::uint64_t seed) {
  PoseConfig cfg;
  cfg.n = n;
  cfg.num_classes = k;
  cfg.skew = skew;
  return gen_pose_bias(cfg, seed);
}

}  // namespace bumlab::biasgen
