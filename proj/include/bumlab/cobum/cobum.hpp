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
#include <cmath>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "bumlab/eval/report.hpp"

namespace bumlab::cobum {

struct CoBumParams {
  double alpha_u = 0.25, alpha_f = 0.25, alpha_q = 1.0, alpha_p = 1.0, alpha_e = 1.0;
  double gamma = 0.5;
  double kappa = 1.0;
  double epsilon = 0.01;    // clamp floor for component scores
  double min_time = 2.0;    // runtimes are floored here before taking logs

  std::array<double, 5> alphas() const { return {alpha_u, alpha_f, alpha_q, alpha_p, alpha_e}; }

  void validate() const {
    double total = 0;
    for (double a : alphas()) {
      if (!(a >= 0)) throw std::invalid_argument("cobum: alphas must be >= 0");
      total += a;
    }
    if (!(total > 0)) throw std::invalid_argument("cobum: at least one alpha must be positive");
    if (!(gamma >= 0)) throw std::invalid_argument("cobum: gamma must be >= 0");
    if (!(kappa > 0)) throw std::invalid_argument("cobum: kappa must be > 0");
    if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("cobum: epsilon must lie in (0, 1)");
    if (!(min_time > 1)) throw std::invalid_argument("cobum: min_time must exceed 1");
  }
};

struct CoBumScores {
  double u = 0, f = 0, q = 0, p = 0, e = 0;                 // raw
  double u_c = 0, f_c = 0, q_c = 0, p_c = 0, e_c = 0;       // clamped to [epsilon, 1]
  double composite = 0;

  std::array<double, 5> clamped() const { return {u_c, f_c, q_c, p_c, e_c}; }
};

/// Deviation of `value` from gold on a scale where gold is 0 and baseline is 1.
/// Past baseline the excess is scaled by gamma; past gold it clips to 0.
inline double normalize(double value, double gold, double base, double gamma) {
  if (base == gold) throw std::invalid_argument("normalize: baseline equals gold, normalization is degenerate");
  const double n = (value - gold) / (base - gold);
  if (n < 0) return 0.0;
  if (n > 1) return 1.0 + gamma * (n - 1.0);
  return n;
}

/// kappa * sum(alpha) / sum(alpha / s) over the clamped scores.
inline double composite(const std::array<double, 5>& clamped, const CoBumParams& params) {
  params.validate();
  const auto a = params.alphas();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (!(clamped[i] > 0)) throw std::logic_error("cobum: component score must be positive");
    num += a[i];
    den += a[i] / clamped[i];
  }
  return params.kappa * num / den;
}

inline double clamp_score(double v, double eps) { return std::min(1.0, std::max(eps, v)); }

/// Component scores of an unlearned model against gold and baseline reports.
///
/// U = (RA_u/RA_g + TA_u/TA_g) / 2, F = 1 - (N_DP + N_EO) / 2,
/// Q = 1 - FA_u/FA_g, P = 1 - N_MIA, E = log T_g / log T_u.
/// `time_*` are the runtimes to compare (wall seconds or work units).
inline CoBumScores component_scores(const eval::EvalReport& u, const eval::EvalReport& gold,
                                    const eval::EvalReport& base, double time_u, double time_gold,
                                    const CoBumParams& params = {}) {
  params.validate();
  auto need = [](double v, const char* name) {
    if (!(v > 0)) throw std::invalid_argument(std::string("cobum: gold ") + name + " must be positive");
  };
  need(gold.ra, "RA");
  need(gold.ta, "TA");
  need(gold.fa, "FA");
  CoBumScores s;
  s.u = 0.5 * (u.ra / gold.ra + u.ta / gold.ta);
  s.f = 1.0 - 0.5 * (normalize(u.dp_gap, gold.dp_gap, base.dp_gap, params.gamma) +
                     normalize(u.eo_gap, gold.eo_gap, base.eo_gap, params.gamma));
  s.q = 1.0 - u.fa / gold.fa;
  s.p = 1.0 - normalize(u.mia_auc, gold.mia_auc, base.mia_auc, params.gamma);
  const double tg = std::max(time_gold, params.min_time), tu = std::max(time_u, params.min_time);
  s.e = std::log(tg) / std::log(tu);
  s.u_c = clamp_score(s.u, params.epsilon);
  s.f_c = clamp_score(s.f, params.epsilon);
  s.q_c = clamp_score(s.q, params.epsilon);
  s.p_c = clamp_score(s.p, params.epsilon);
  s.e_c = clamp_score(s.e, params.epsilon);
  s.composite = composite(s.clamped(), params);
  return s;
}

inline nlohmann::json to_json(const CoBumParams& p) {
  return {{"alpha_u", p.alpha_u}, {"alpha_f", p.alpha_f}, {"alpha_q", p.alpha_q}, {"alpha_p", p.alpha_p},
          {"alpha_e", p.alpha_e}, {"gamma", p.gamma},     {"kappa", p.kappa},     {"epsilon", p.epsilon},
          {"min_time", p.min_time}};
}

inline nlohmann::json to_json(const CoBumScores& s) {
  return {{"U", s.u},     {"F", s.f},     {"Q", s.q},     {"P", s.p},     {"E", s.e},
          {"U_c", s.u_c}, {"F_c", s.f_c}, {"Q_c", s.q_c}, {"P_c", s.p_c}, {"E_c", s.e_c},
          {"CoBUM", s.composite}};
}

}  // namespace bumlab::cobum
