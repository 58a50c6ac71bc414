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
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bumlab/biasgen/dataset.hpp"

namespace bumlab::biasgen {

enum class CounterfactualMode { mask_patch, rebalance_bins };

inline std::string to_string(CounterfactualMode m) {
  return m == CounterfactualMode::mask_patch ? "mask_patch" : "rebalance_bins";
}

inline CounterfactualMode counterfactual_mode_from_string(const std::string& s) {
  if (s == "mask_patch") return CounterfactualMode::mask_patch;
  if (s == "rebalance_bins") return CounterfactualMode::rebalance_bins;
  throw std::invalid_argument("unknown counterfactual mode '" + s + "'");
}

/// Default mode for a scenario. The attribute scenario has none.
inline CounterfactualMode default_counterfactual_mode(Scenario s) {
  switch (s) {
    case Scenario::patch: return CounterfactualMode::mask_patch;
    case Scenario::pose: return CounterfactualMode::rebalance_bins;
    case Scenario::attribute: break;
  }
  throw std::invalid_argument("no counterfactual construction for scenario '" + to_string(s) + "'");
}

struct Counterfactual {
  std::vector<Sample> samples;
  std::vector<std::size_t> source;  // train index each sample was copied from
};

/// Copies of D_f with the shortcut removed; (s, label) kept bit-exact.
///
/// mask_patch replaces the b-block with fresh N(0, 1) noise.
/// rebalance_bins assigns the copies round-robin to bins 0, 1, 2 and takes
/// the bias block of a random training sample from the assigned bin.
inline Counterfactual build_counterfactual(const DataBundle& bundle, CounterfactualMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Counterfactual out;
  if (mode == CounterfactualMode::mask_patch) {
    if (bundle.scenario != Scenario::patch)
      throw std::invalid_argument("mask_patch requires a patch bundle, got " + to_string(bundle.scenario));
    const double marker = bundle.generator_config.value("marker_value", 3.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto i : bundle.forget) {
      Sample s = bundle.train.at(i);
      for (auto& v : s.b) {
        do v = nd(rng);
        while (v == marker);
      }
      s.bias_flag = false;
      s.group = 0;
      out.samples.push_back(std::move(s));
      out.source.push_back(i);
    }
    return out;
  }

  if (bundle.scenario != Scenario::pose)
    throw std::invalid_argument("rebalance_bins requires a pose bundle, got " + to_string(bundle.scenario));
  std::array<std::vector<std::size_t>, 3> by_bin;
  for (std::size_t i = 0; i < bundle.train.size(); ++i) by_bin.at(static_cast<std::size_t>(bundle.train[i].group)).push_back(i);
  for (const auto& b : by_bin)
    if (b.empty()) throw std::invalid_argument("rebalance_bins: a pose bin is empty");

  std::vector<std::size_t> src(bundle.forget);
  std::shuffle(src.begin(), src.end(), rng);
  for (std::size_t j = 0; j < src.size(); ++j) {
    const int bin = static_cast<int>(j % 3);
    const auto& pool = by_bin[static_cast<std::size_t>(bin)];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    Sample s = bundle.train.at(src[j]);
    s.b = bundle.train[pool[pick(rng)]].b;
    s.group = bin;
    s.bias_flag = bin == 2;
    out.samples.push_back(std::move(s));
    out.source.push_back(src[j]);
  }
  return out;
}

/// Stores the counterfactual set in the bundle.
inline void attach_counterfactual(DataBundle& bundle, CounterfactualMode mode, std::uint64_t seed) {
  auto cf = build_counterfactual(bundle, mode, seed);
  bundle.counterfactual = std::move(cf.samples);
  bundle.counterfactual_source = std::move(cf.source);
}

}  // namespace bumlab::biasgen
