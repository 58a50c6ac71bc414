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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bumlab/cobum/cobum.hpp"

namespace {

using namespace bumlab;
using namespace bumlab::cobum;

eval::EvalReport report(double fa, double ra, double ta, double dp, double eo, double mia) {
  eval::EvalReport r;
  r.fa = fa;
  r.ra = ra;
  r.ta = ta;
  r.dp_gap = dp;
  r.eo_gap = eo;
  r.mia_auc = mia;
  return r;
}

TEST(Normalize, Anchors) {
  EXPECT_EQ(normalize(0.2, 0.2, 0.8, 0.5), 0.0);
  EXPECT_EQ(normalize(0.8, 0.2, 0.8, 0.5), 1.0);
  EXPECT_NEAR(normalize(0.5, 0.2, 0.8, 0.5), 0.5, 1e-15);
}

TEST(Normalize, RegressionPastBaselineIsDamped) {
  // raw N = 1.5
  EXPECT_NEAR(normalize(1.1, 0.2, 0.8, 0.5), 1.25, 1e-12);
  // works with baseline below gold too
  EXPECT_NEAR(normalize(0.0, 1.0, 0.5, 0.5), 1.5, 1e-12);
}

TEST(Normalize, OvershootClipsToZero) { EXPECT_EQ(normalize(0.1, 0.2, 0.8, 0.5), 0.0); }

TEST(Normalize, DegenerateAnchorsRejected) { EXPECT_THROW(normalize(0.3, 0.5, 0.5, 0.5), std::invalid_argument); }

TEST(Composite, WorkedExample) {
  CoBumParams p;
  EXPECT_NEAR(composite({1, 1, 0.5, 1, 1}, p), 3.5 / 4.5, 1e-12);
  EXPECT_NEAR(composite({1, 1, 0.5, 1, 1}, p), 0.7778, 1e-4);
}

TEST(Composite, EqualScoresGiveKappaTimesScore) {
  CoBumParams p;
  p.kappa = 2.0;
  for (double s : {0.01, 0.3, 1.0}) EXPECT_NEAR(composite({s, s, s, s, s}, p), 2.0 * s, 1e-12);
  EXPECT_NEAR(composite({1, 1, 1, 1, 1}, CoBumParams{}), 1.0, 1e-15);
}

TEST(Composite, BoundedMonotoneAndBelowArithmeticMean) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  CoBumParams p;
  const auto a = p.alphas();
  for (int t = 0; t < 200; ++t) {
    std::array<double, 5> s;
    for (auto& v : s) v = u(rng);
    const double c = composite(s, p);
    EXPECT_GT(c, 0.0);
    EXPECT_LE(c, p.kappa);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      num += a[i] * s[i];
      den += a[i];
    }
    EXPECT_LE(c, num / den + 1e-12);
    for (std::size_t i = 0; i < 5; ++i) {
      auto up = s;
      up[i] = std::min(1.0, up[i] + 0.01);
      if (up[i] > s[i]) EXPECT_GT(composite(up, p), c);
    }
  }
}

TEST(Composite, SingleWeightPicksThatScore) {
  CoBumParams p;
  p.alpha_u = p.alpha_f = p.alpha_p = p.alpha_e = 0;
  p.alpha_q = 1;
  p.kappa = 1.5;
  EXPECT_NEAR(composite({0.9, 0.2, 0.4, 0.7, 0.1}, p), 1.5 * 0.4, 1e-12);
}

TEST(Params, Validation) {
  CoBumParams p;
  p.alpha_u = p.alpha_f = p.alpha_q = p.alpha_p = p.alpha_e = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.kappa = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.epsilon = 1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(ComponentScores, AnchorIdentity) {
  auto gold = report(0.2, 0.8, 0.7, 0.1, 0.15, 0.5);
  auto base = report(0.99, 0.85, 0.6, 0.6, 0.7, 0.9);
  auto s = component_scores(gold, gold, base, 30, 30);
  EXPECT_DOUBLE_EQ(s.u, 1.0);
  EXPECT_DOUBLE_EQ(s.f, 1.0);
  EXPECT_DOUBLE_EQ(s.p, 1.0);
  EXPECT_DOUBLE_EQ(s.e, 1.0);
  EXPECT_DOUBLE_EQ(s.q, 0.0);
  EXPECT_DOUBLE_EQ(s.q_c, 0.01);
}

TEST(ComponentScores, ReferenceRowArithmetic) {
  // Gold: FA 17.67, RA 72.33, TA 63.03, time 222. GA: FA 37.00, RA 74.67, TA 64.41, time 299.
  auto gold = report(0.1767, 0.7233, 0.6303, 0.1, 0.1, 0.5);
  auto base = report(0.9, 0.8, 0.7, 0.3, 0.3, 0.8);
  auto ga = report(0.37, 0.7467, 0.6441, 0.2, 0.2, 0.6);
  auto s = component_scores(ga, gold, base, 299, 222);
  EXPECT_NEAR(s.u, 0.5 * (74.67 / 72.33 + 64.41 / 63.03), 1e-12);
  EXPECT_NEAR(s.u, 1.027, 1e-3);
  EXPECT_EQ(s.u_c, 1.0);
  EXPECT_NEAR(s.e, std::log(222.0) / std::log(299.0), 1e-12);
  EXPECT_NEAR(s.e, 0.947, 1e-3);
  EXPECT_NEAR(s.q, 1 - 37.0 / 17.67, 1e-12);
  EXPECT_EQ(s.q_c, 0.01);
  EXPECT_GT(s.composite, 0.0);
  EXPECT_LE(s.composite, 1.0);
}

TEST(ComponentScores, ShortRuntimesFloored) {
  auto gold = report(0.2, 0.8, 0.7, 0.1, 0.1, 0.5);
  auto base = report(0.9, 0.8, 0.7, 0.3, 0.3, 0.8);
  auto s = component_scores(gold, gold, base, 0.01, 1.5);
  EXPECT_DOUBLE_EQ(s.e, 1.0);
  EXPECT_TRUE(std::isfinite(s.composite));
}

TEST(ComponentScores, ZeroGoldDenominatorNamed) {
  auto gold = report(0.0, 0.8, 0.7, 0.1, 0.1, 0.5);
  auto base = report(0.9, 0.8, 0.7, 0.3, 0.3, 0.8);
  try {
    component_scores(gold, gold, base, 3, 3);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("FA"), std::string::npos);
  }
}

}  // namespace
