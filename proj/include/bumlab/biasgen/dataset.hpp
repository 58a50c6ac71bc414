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

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bumlab/model/train.hpp"

namespace bumlab::biasgen {

using ad::Tensor;

enum class Scenario { patch, attribute, pose };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::patch: return "patch";
    case Scenario::attribute: return "attribute";
    case Scenario::pose: return "pose";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "patch") return Scenario::patch;
  if (s == "attribute") return Scenario::attribute;
  if (s == "pose") return Scenario::pose;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

/// One synthetic sample x = [s | b]: a semantic block that carries the class
/// signal and a bias block that carries the shortcut.
struct Sample {
  std::vector<double> s;
  std::vector<double> b;
  int label = 0;
  int group = 0;  // sensitive attribute (0/1) or pose bin (0/1/2)
  bool bias_flag = false;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DataBundle {
  Scenario scenario = Scenario::patch;
  std::size_t semantic_dim = 0;
  std::size_t bias_dim = 0;
  std::size_t num_classes = 0;
  std::vector<Sample> train, val, test;
  std::vector<std::size_t> forget;  // indices into train
  std::vector<std::size_t> retain;  // indices into train
  std::vector<Sample> counterfactual;
  std::vector<std::size_t> counterfactual_source;  // train index each counterfactual copies

  // One-vs-rest view used by the group fairness metrics.
  std::vector<int> positive_classes;
  int protected_group = 1;

  nlohmann::json generator_config;
  std::uint64_t seed = 0;

  std::size_t feature_dim() const { return semantic_dim + bias_dim; }

  std::vector<Sample> forget_samples() const { return pick(forget); }
  std::vector<Sample> retain_samples() const { return pick(retain); }

  friend bool operator==(const DataBundle&, const DataBundle&) = default;

 private:
  std::vector<Sample> pick(const std::vector<std::size_t>& idx) const {
    std::vector<Sample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(train.at(i));
    return out;
  }
};

inline std::vector<double> features(const Sample& s) {
  std::vector<double> x(s.s);
  x.insert(x.end(), s.b.begin(), s.b.end());
  return x;
}

inline model::LabeledData labeled(std::span<const Sample> samples) {
  if (samples.empty()) throw std::invalid_argument("labeled: empty sample list");
  const std::size_t d = samples[0].s.size() + samples[0].b.size();
  std::vector<double> x;
  x.reserve(samples.size() * d);
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.s.size() + s.b.size() != d) throw ShapeError("labeled: inconsistent feature width");
    x.insert(x.end(), s.s.begin(), s.s.end());
    x.insert(x.end(), s.b.begin(), s.b.end());
    y.push_back(s.label);
  }
  return {Tensor({samples.size(), d}, std::move(x)), std::move(y)};
}

struct SplitCounts {
  std::size_t train, val, test;
};

/// 70/10/20 split of n samples; each part within one sample of its share.
inline SplitCounts split_counts(std::size_t n) {
  const auto round = [](double v) { return static_cast<std::size_t>(v + 0.5); };
  const std::size_t train = round(0.7 * static_cast<double>(n));
  const std::size_t val = std::min(round(0.1 * static_cast<double>(n)), n - train);
  return {train, val, n - train - val};
}

}  // namespace bumlab::biasgen
