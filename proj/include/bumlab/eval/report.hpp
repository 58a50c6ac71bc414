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
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bumlab/eval/metrics.hpp"

namespace bumlab::eval {

struct EvalReport {
  double fa = 0, ra = 0, ta = 0;  // forget / retain / test accuracy
  double dp_gap = 0, eo_gap = 0;
  std::optional<double> dp_drop_pct, eo_drop_pct;  // set by attach_baseline
  double mia_auc = 0.5;
  double wall_time_seconds = 0;
  double work_units = 0;  // samples through forward+backward during the method

  void validate() const {
    for (double v : {fa, ra, ta, mia_auc})
      if (!(v >= 0 && v <= 1)) throw std::logic_error("EvalReport: accuracy or AUC outside [0, 1]");
    for (double v : {dp_gap, eo_gap})
      if (!(v >= 0 && v <= 1)) throw std::logic_error("EvalReport: fairness gap outside [0, 1]");
  }
};

/// Fills the drop percentages relative to `baseline`. A zero baseline gap
/// leaves the corresponding field unset.
inline void attach_baseline(EvalReport& r, const EvalReport& baseline) {
  r.dp_drop_pct.reset();
  r.eo_drop_pct.reset();
  if (baseline.dp_gap > 0) r.dp_drop_pct = fairness_drop_pct(baseline.dp_gap, r.dp_gap);
  if (baseline.eo_gap > 0) r.eo_drop_pct = fairness_drop_pct(baseline.eo_gap, r.eo_gap);
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"FA", r.fa},         {"RA", r.ra},         {"TA", r.ta},
                      {"dp_gap", r.dp_gap}, {"eo_gap", r.eo_gap}, {"MIA", r.mia_auc},
                      {"wall_time_seconds", r.wall_time_seconds}, {"work_units", r.work_units}};
  j["dp_drop_pct"] = r.dp_drop_pct ? nlohmann::json(*r.dp_drop_pct) : nlohmann::json(nullptr);
  j["eo_drop_pct"] = r.eo_drop_pct ? nlohmann::json(*r.eo_drop_pct) : nlohmann::json(nullptr);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.fa = j.at("FA").get<double>();
  r.ra = j.at("RA").get<double>();
  r.ta = j.at("TA").get<double>();
  r.dp_gap = j.at("dp_gap").get<double>();
  r.eo_gap = j.at("eo_gap").get<double>();
  r.mia_auc = j.at("MIA").get<double>();
  r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  r.work_units = j.value("work_units", 0.0);
  if (j.contains("dp_drop_pct") && !j["dp_drop_pct"].is_null()) r.dp_drop_pct = j["dp_drop_pct"].get<double>();
  if (j.contains("eo_drop_pct") && !j["eo_drop_pct"].is_null()) r.eo_drop_pct = j["eo_drop_pct"].get<double>();
  r.validate();
  return r;
}

/// One-vs-rest binary view of a split: positive = label in the bundle's
/// positive classes, group = (group == protected group).
struct BinaryView {
  std::vector<int> pred, label, group;
};

inline BinaryView binary_view(const ModelParams& m, const biasgen::DataBundle& b, std::span<const Sample> split) {
  auto is_pos = [&](int c) {
    return std::find(b.positive_classes.begin(), b.positive_classes.end(), c) != b.positive_classes.end();
  };
  auto d = biasgen::labeled(split);
  auto pred = model::predict(m, d.x);
  BinaryView v;
  for (std::size_t i = 0; i < split.size(); ++i) {
    v.pred.push_back(is_pos(pred[i]));
    v.label.push_back(is_pos(split[i].label));
    v.group.push_back(split[i].group == b.protected_group);
  }
  return v;
}

/// Full report on a bundle: FA on D_f, RA on D_r, TA and the fairness gaps on
/// test, MIA with D_f members against test nonmembers.
inline EvalReport evaluate(const ModelParams& m, const biasgen::DataBundle& b, double wall_time_seconds = 0,
                           double work_units = 0) {
  const auto forget = b.forget_samples();
  const auto retain = b.retain_samples();
  if (forget.empty()) throw std::invalid_argument("evaluate: forget set is empty");
  EvalReport r;
  r.fa = accuracy(m, forget);
  r.ra = accuracy(m, retain);
  r.ta = accuracy(m, b.test);
  const auto v = binary_view(m, b, b.test);
  r.dp_gap = demographic_parity_gap(v.pred, v.group);
  r.eo_gap = equalized_odds_gap(v.pred, v.label, v.group);
  r.mia_auc = mia_auc(m, forget, b.test);
  r.wall_time_seconds = wall_time_seconds;
  r.work_units = work_units;
  r.validate();
  return r;
}

}  // namespace bumlab::eval
