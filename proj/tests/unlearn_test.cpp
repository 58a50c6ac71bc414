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
#include <sstream>

#include "bumlab/biasgen/counterfactual.hpp"
#include "bumlab/biasgen/generators.hpp"
#include "bumlab/eval/report.hpp"
#include "bumlab/unlearn/fmd.hpp"
#include "test_util.hpp"

namespace {

using namespace bumlab;
using namespace bumlab::unlearn;
using biasgen::Sample;
using model::ModelParams;
namespace bt = bumlab::testing;

double max_diff(const ModelParams& a, const ModelParams& b) {
  auto sa = model::slots(a);
  auto sb = model::slots(b);
  double d = 0;
  for (std::size_t i = 0; i < sa.size(); ++i)
    for (std::size_t j = 0; j < sa[i]->size(); ++j) d = std::max(d, std::abs((*sa[i])[j] - (*sb[i])[j]));
  return d;
}

struct PatchFixture {
  biasgen::DataBundle bundle;
  model::Architecture arch;
  model::TrainConfig train_cfg;
  ModelParams baseline, gold;
  eval::EvalReport base_report;
};

const PatchFixture& patch() {
  static const PatchFixture fx = [] {
    PatchFixture f;
    f.bundle = biasgen::gen_patch_bias(biasgen::PatchConfig{}, 102);
    biasgen::attach_counterfactual(f.bundle, biasgen::CounterfactualMode::mask_patch, 809);
    f.arch = {{f.bundle.feature_dim(), 32, 10}, model::Head::softmax};
    f.train_cfg.learning_rate = 1e-3;
    f.train_cfg.epochs = 10;
    f.train_cfg.seed = 203;
    f.baseline = model::train(model::init_model(f.arch, 203), biasgen::labeled(f.bundle.train), f.train_cfg).model;
    f.gold = hard_unlearn(f.bundle, f.arch, f.train_cfg, 304).model;
    f.base_report = eval::evaluate(f.baseline, f.bundle);
    return f;
  }();
  return fx;
}

// Small binary problem for the convex (linear sigmoid) checks.
biasgen::DataBundle logistic_bundle(std::uint64_t seed) {
  biasgen::AttributeConfig cfg;
  cfg.n = 400;
  cfg.corr_ratio = 3;
  cfg.semantic_dim = 3;
  cfg.bias_dim = 2;
  return biasgen::gen_attribute_bias(cfg, seed);
}

ModelParams logistic_model(const biasgen::DataBundle& b) {
  return model::init_model({b.feature_dim(), 1}, model::Head::sigmoid, 9);
}

// ---------------------------------------------------------------- hard

TEST(HardUnlearn, EmptyForgetSetTrainsOnEverything) {
  biasgen::PatchConfig cfg;
  cfg.n_per_class = 40;
  cfg.num_classes = 3;
  cfg.fraction = 0.0;
  auto b = biasgen::gen_patch_bias(cfg, 1);
  model::TrainConfig tc;
  tc.epochs = 2;
  model::Architecture arch{{b.feature_dim(), 3}, model::Head::softmax};
  auto r = hard_unlearn(b, arch, tc, 4);
  auto full = model::train(model::init_model(arch, 4), biasgen::labeled(b.train), tc).model;
  EXPECT_EQ(r.model, full);
}

TEST(HardUnlearn, GoldForgetsShortcutAndKeepsRetainAccuracy) {
  const auto& f = patch();
  auto gold = eval::evaluate(f.gold, f.bundle);
  EXPECT_LT(gold.fa, f.base_report.fa);
  EXPECT_LE(std::abs(gold.ra - f.base_report.ra), 0.05);
}

TEST(HardUnlearn, Deterministic) {
  const auto& f = patch();
  auto again = hard_unlearn(f.bundle, f.arch, f.train_cfg, 304);
  EXPECT_EQ(again.model, f.gold);
  EXPECT_GT(again.wall_time_seconds, 0.0);
}

TEST(HardUnlearn, EmptyRetainRejected) {
  auto b = biasgen::gen_patch_bias(20, 2, 0, 1.0, 3.0, 1);
  b.retain.clear();
  EXPECT_THROW(hard_unlearn(b, {{b.feature_dim(), 2}, model::Head::softmax}, {}, 1), std::invalid_argument);
}

// ---------------------------------------------------------------- GA

TEST(GradientAscent, TinyStepBarelyMoves) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.eta = 1e-12;
  cfg.steps = 1;
  auto r = gradient_ascent(f.baseline, f.bundle, cfg);
  EXPECT_LE(max_diff(r.model, f.baseline), 1e-9);
  EXPECT_EQ(r.step_log.size(), 1u);
}

TEST(GradientAscent, ForgetLossRisesOnConvexModel) {
  auto b = logistic_bundle(3);
  auto m = logistic_model(b);
  StrategyConfig cfg;
  cfg.alpha = 0;
  cfg.eta = 0.05;
  cfg.steps = 11;
  auto r = gradient_ascent(m, b, cfg);
  auto lf = r.step_log.trace("forget_loss");
  ASSERT_EQ(lf.size(), 11u);
  for (std::size_t i = 1; i < lf.size(); ++i) EXPECT_GT(lf[i], lf[i - 1]) << i;
}

TEST(GradientAscent, ReducesForgetAccuracyAndKeepsRetain) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.eta = 4e-3;
  cfg.seed = 405;
  auto r = gradient_ascent(f.baseline, f.bundle, cfg);
  auto rep = eval::evaluate(r.model, f.bundle);
  EXPECT_LT(rep.fa, f.base_report.fa);
  EXPECT_LE(std::abs(rep.ra - f.base_report.ra), 0.10);
}

TEST(GradientAscent, DivergenceGuardKeepsFiniteState) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.eta = 10.0;
  cfg.steps = 50;
  auto r = gradient_ascent(f.baseline, f.bundle, cfg);
  EXPECT_TRUE(r.truncated);
  EXPECT_LT(r.step_log.size(), 50u);
  for (const auto* t : model::slots(r.model)) EXPECT_TRUE(t->all_finite());
}

TEST(GradientAscent, InputModelUntouched) {
  const auto& f = patch();
  ModelParams copy = f.baseline;
  StrategyConfig cfg;
  cfg.steps = 3;
  auto r = gradient_ascent(copy, f.bundle, cfg);
  EXPECT_EQ(copy, f.baseline);
  EXPECT_FALSE(r.model == f.baseline);
}

TEST(GradientAscent, RejectsNonPositiveEta) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.eta = 0;
  EXPECT_THROW(gradient_ascent(f.baseline, f.bundle, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------- LoRA

TEST(LoraUnlearn, ZeroStepsIsBehaviorallyIdentical) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.steps = 0;
  auto r = lora_unlearn(f.baseline, f.bundle, cfg);
  auto x = biasgen::labeled(f.bundle.test).x;
  auto a = model::forward(f.baseline, x), b = model::forward(r.model, x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(LoraUnlearn, RetainOnlyObjectiveDescends) {
  auto b = logistic_bundle(5);
  auto m = model::train(logistic_model(b), biasgen::labeled(b.train), {.learning_rate = 1e-2, .epochs = 2}).model;
  StrategyConfig cfg;
  cfg.beta = 0;
  cfg.rank = 1;
  cfg.learning_rate = 1e-3;
  cfg.steps = 10;
  cfg.retain_batch = b.retain.size();
  cfg.lora_layers = {0};
  auto r = lora_unlearn(m, b, cfg);
  auto lr = r.step_log.trace("retain_loss");
  for (std::size_t i = 1; i < lr.size(); ++i) EXPECT_LE(lr[i], lr[i - 1] + 1e-15) << i;
}

TEST(LoraUnlearn, BaseWeightsUnchangedAndForgetAccuracyDrops) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.seed = 506;
  auto r = lora_unlearn(f.baseline, f.bundle, cfg);
  for (std::size_t i = 0; i < f.baseline.layers.size(); ++i) {
    EXPECT_EQ(r.model.layers[i].weight, f.baseline.layers[i].weight);
    EXPECT_EQ(r.model.layers[i].bias, f.baseline.layers[i].bias);
  }
  EXPECT_FALSE(r.model.adapters.empty());
  auto rep = eval::evaluate(r.model, f.bundle);
  EXPECT_LT(rep.fa, f.base_report.fa);
  EXPECT_LE(std::abs(rep.ra - f.base_report.ra), 0.15);
}

TEST(LoraUnlearn, InvalidRankRejected) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.rank = 1000;
  EXPECT_THROW(lora_unlearn(f.baseline, f.bundle, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------- SCRUB

TEST(ScrubUnlearn, IdenticalTeacherHasZeroKl) {
  const auto& f = patch();
  EXPECT_NEAR(mean_kl(f.baseline, f.baseline, biasgen::labeled(f.bundle.test).x), 0.0, 1e-12);
}

TEST(ScrubUnlearn, LoggedTotalDecomposes) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.steps = 15;
  auto r = scrub_unlearn(f.baseline, f.gold, f.bundle, cfg);
  ASSERT_EQ(r.step_log.size(), 15u);
  const auto kr = r.step_log.trace("kl_retain"), ce = r.step_log.trace("retain_loss"),
             kf = r.step_log.trace("kl_forget"), tot = r.step_log.trace("total");
  for (std::size_t i = 0; i < tot.size(); ++i)
    EXPECT_NEAR(tot[i], kr[i] + ce[i] - std::min(kf[i], cfg.forget_kl_clip), 1e-10);
}

TEST(ScrubUnlearn, ForgetDivergenceExceedsRetainDivergence) {
  const auto& f = patch();
  StrategyConfig cfg;
  cfg.steps = 50;
  auto r = scrub_unlearn(f.baseline, f.gold, f.bundle, cfg);
  EXPECT_GT(r.step_log.trace("kl_forget").back(), r.step_log.trace("kl_retain").back());
}

TEST(ScrubUnlearn, EmptyForgetSetIsPlainDistillation) {
  const auto& f = patch();
  auto b = f.bundle;
  b.forget.clear();
  StrategyConfig cfg;
  auto r = scrub_unlearn(f.baseline, f.gold, b, cfg);
  const auto retain = b.retain_samples();
  EXPECT_NEAR(eval::accuracy(r.model, retain), eval::accuracy(f.gold, retain), 0.02);
}

TEST(ScrubUnlearn, ArchitectureMismatchRejected) {
  const auto& f = patch();
  auto other = model::init_model({f.bundle.feature_dim(), 16, 10}, model::Head::softmax, 1);
  EXPECT_THROW(scrub_unlearn(f.baseline, other, f.bundle, {}), std::invalid_argument);
}

// ---------------------------------------------------------------- influence

TEST(Influence, ZeroSampleGradientGivesZero) {
  auto f = [](ad::Graph&, ad::Var p) { return ad::sq_norm(p); };
  auto zero_loss = [](ad::Graph& g, ad::Var) { return g.constant(ad::Tensor::scalar(1.0)); };
  auto bias = [](ad::Graph&, ad::Var p) { return ad::sum(p); };
  auto v = influence(f, ad::Tensor::vector({1, 2, 3}), zero_loss, bias);
  EXPECT_EQ(v.value, 0.0);
}

TEST(Influence, LinearInBiasMeasure) {
  auto b = logistic_bundle(2);
  auto m = logistic_model(b);
  const auto mask = model::param_mask(m, model::ParamSet::all);
  const auto train = biasgen::labeled(b.train);
  auto obj = mean_loss_fn(m, mask, train, 1e-2);
  auto probe = biasgen::labeled(b.test);
  auto bias = mean_loss_fn(m, mask, probe);
  auto scaled = [bias](ad::Graph& g, ad::Var p) { return ad::scale(bias(g, p), 3.5); };
  const auto theta = model::flatten(m, mask);
  InfluenceEstimator e1(obj, bias, theta), e3(obj, scaled, theta);
  for (std::size_t i = 0; i < 5; ++i) {
    std::size_t idx[] = {i};
    auto li = mean_loss_fn(m, mask, train.rows(idx));
    EXPECT_NEAR(e3.influence(li).value, 3.5 * e1.influence(li).value, 1e-9 * (1 + std::abs(e1.influence(li).value)));
  }
}

TEST(Influence, TracksLeaveOneOutRetraining) {
  // d=5 with an intercept column, n=60, l2 keeps the problem strictly convex.
  const std::size_t n = 60, d = 5;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0, 1);
  std::vector<double> wtrue = {1.0, -2.0, 0.5, 1.5, -0.7};
  std::vector<double> x, xa;
  std::vector<int> y;
  std::vector<double> yd;
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.3;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = nd(rng);
      x.push_back(v);
      xa.push_back(v);
      z += wtrue[j] * v;
    }
    xa.push_back(1.0);
    const int lab = std::bernoulli_distribution(bt::sigmoid(z))(rng);
    y.push_back(lab);
    yd.push_back(lab);
  }
  const double l2 = 1e-2;
  bt::LogisticOracle oracle{xa, yd, n, d + 1, l2};
  std::vector<double> ones(n, 1.0);
  const auto w_full = oracle.fit(ones);

  auto m = model::init_model({d, 1}, model::Head::sigmoid, 0);
  const auto mask = model::param_mask(m, model::ParamSet::all);
  model::unflatten(m, mask, ad::Tensor::vector(w_full));  // W (1 x d) then b
  model::LabeledData train{ad::Tensor({n, d}, x), y};

  std::vector<double> px, pyd;
  std::vector<int> py;
  for (std::size_t i = 0; i < 40; ++i) {
    double z = 0.3;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = nd(rng);
      px.push_back(v);
      z += wtrue[j] * v;
    }
    py.push_back(std::bernoulli_distribution(bt::sigmoid(z))(rng));
  }
  model::LabeledData probe{ad::Tensor({40, d}, px), py};
  auto probe_loss = [&](const std::vector<double>& w) {
    double s = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * px[i * d + j];
      s += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - py[i] * z;
    }
    return s / 40;
  };

  InfluenceEstimator est(mean_loss_fn(m, mask, train, l2), mean_loss_fn(m, mask, probe), model::flatten(m, mask));
  ASSERT_TRUE(est.solve().converged);
  std::vector<double> predicted, actual;
  for (std::size_t i = 0; i < 30; ++i) {
    std::size_t idx[] = {i};
    predicted.push_back(est.influence(mean_loss_fn(m, mask, train.rows(idx))).value);
    auto weights = ones;
    weights[i] = 0;
    actual.push_back(probe_loss(w_full) - probe_loss(oracle.fit(weights)));
  }
  EXPECT_GE(bt::spearman(predicted, actual), 0.9);
}

// ---------------------------------------------------------------- FMD

TEST(NewtonStep, QuadraticSolvedInOneStep) {
  std::mt19937_64 rng(4);
  const std::size_t n = 8;
  auto a = bt::random_spd(n, rng);
  auto target = bt::random_vector(n, rng);
  // Parameters as an (n x 1) column so the product with A is a matmul.
  auto f = [&](ad::Graph& g, ad::Var p) {
    ad::Var diff = ad::sub(p, g.constant(ad::Tensor({n, 1}, target)));
    ad::Var a_diff = ad::matmul(g.constant(ad::Tensor({n, n}, a)), diff);
    return ad::scale(ad::sum(ad::mul(diff, a_diff)), 0.5);
  };
  auto step = newton_step(f, ad::Tensor({n, 1}, bt::random_vector(n, rng)), 0.0);
  EXPECT_FALSE(step.fallback);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(step.theta[i], target[i], 1e-8);
}

TEST(NewtonStep, HeavyDampingShrinksStep) {
  auto f = [](ad::Graph& g, ad::Var p) { return ad::sum(ad::mul(p, g.constant(ad::Tensor::vector({1, -1, 1})))); };
  auto step = newton_step(f, ad::Tensor::vector({0, 0, 0}), 1e6);
  EXPECT_LE(step.step_norm, 1e-4);
}

TEST(NewtonStep, NonConvergenceFallsBackToScaledGradient) {
  auto f = [](ad::Graph&, ad::Var p) { return ad::scale(ad::sq_norm(p), 0.5); };
  auto step = newton_step(f, ad::Tensor::vector({2, 4}), 0.5, /*max_iter=*/0);
  EXPECT_TRUE(step.fallback);
  EXPECT_NEAR(step.theta[0], 2 - 2 / 0.5, 1e-12);
  EXPECT_THROW(newton_step(f, ad::Tensor::vector({2, 4}), 0.0, 0), NumericError);
}

TEST(FmdUnlearn, HeadOnlyByDefault) {
  const auto& f = patch();
  StrategyConfig cfg;
  auto r = fmd_unlearn(f.baseline, f.bundle.counterfactual, cfg);
  EXPECT_EQ(r.model.layers[0].weight, f.baseline.layers[0].weight);
  EXPECT_EQ(r.model.layers[0].bias, f.baseline.layers[0].bias);
  EXPECT_FALSE(r.model.layers[1].weight == f.baseline.layers[1].weight);
  EXPECT_EQ(r.step_log.size(), 1u);
}

TEST(FmdUnlearn, ImprovesHeldOutMaskedProbes) {
  const auto& f = patch();
  // Held-out probes: masked copies of a disjoint set of flagged samples.
  auto probes = biasgen::build_counterfactual(f.bundle, biasgen::CounterfactualMode::mask_patch, 4242).samples;
  const std::size_t half = f.bundle.counterfactual.size() / 2;
  std::vector<Sample> fit(f.bundle.counterfactual.begin(), f.bundle.counterfactual.begin() + half);
  std::vector<Sample> held(probes.begin() + half, probes.end());
  StrategyConfig cfg;
  auto r = fmd_unlearn(f.baseline, fit, cfg);
  EXPECT_GT(eval::accuracy(r.model, held), eval::accuracy(f.baseline, held));
}

TEST(FmdUnlearn, EmptyCounterfactualRejected) {
  const auto& f = patch();
  std::vector<Sample> none;
  EXPECT_THROW(fmd_unlearn(f.baseline, none, {}), std::invalid_argument);
}

TEST(StepLog, WritesTable) {
  StepLog log;
  log.rows = {{1.5, 0.25}};
  std::ostringstream os;
  write_step_log(os, log);
  EXPECT_EQ(os.str(), "step\tforget_loss\tretain_loss\n0\t1.5\t0.25\n");
}

}  // namespace
