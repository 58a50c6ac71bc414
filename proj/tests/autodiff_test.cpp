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

#include <random>

#include "bumlab/autodiff/graph.hpp"
#include "bumlab/autodiff/hvp.hpp"
#include "test_util.hpp"

namespace {

using namespace bumlab;
using namespace bumlab::ad;
using bumlab::testing::random_vector;

TEST(Primitives, ReluAtSignBoundaries) {
  Graph g;
  auto y = relu(g.constant(Tensor::vector({-1, 0, 2})));
  EXPECT_EQ(y.value().data(), (std::vector<double>{0, 0, 2}));
}

TEST(Primitives, IdentityMatmul) {
  std::mt19937_64 rng(3);
  Graph g;
  Tensor eye = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Tensor x({3, 5}, random_vector(15, rng));
  auto y = matmul(g.constant(eye), g.constant(x));
  EXPECT_EQ(y.value(), x);
}

TEST(Primitives, SigmoidAtZero) {
  Graph g;
  EXPECT_DOUBLE_EQ(sigmoid(g.constant(Tensor::scalar(0.0))).item(), 0.5);
}

TEST(Primitives, LogSoftmaxRowsNormalize) {
  Graph g;
  auto y = log_softmax(g.constant(Tensor::matrix(2, 3, {1, 2, 3, -5, 0, 5})));
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(y.value()(r, c));
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Primitives, MatmulShapeMismatchNamesBothShapes) {
  Graph g;
  auto a = g.constant(Tensor::zeros({2, 3}));
  auto b = g.constant(Tensor::zeros({4, 5}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
}

TEST(Primitives, NonFiniteIsAnError) {
  Graph g;
  EXPECT_THROW(exp(g.constant(Tensor::scalar(1000.0))), NumericError);
}

TEST(Backward, SquareAtThree) {
  Graph g;
  auto x = g.leaf(Tensor::scalar(3.0));
  auto grads = g.backward(mul(x, x));
  ASSERT_EQ(grads.size(), 1u);
  EXPECT_DOUBLE_EQ(grads[0].item(), 6.0);
  ASSERT_TRUE(g.node(x.id).value.grad().has_value());
  EXPECT_DOUBLE_EQ((*g.node(x.id).value.grad())[0], 6.0);
}

TEST(Backward, LinearInWeightsGivesRepeatedRows) {
  std::mt19937_64 rng(5);
  Graph g;
  auto w = g.leaf(Tensor({4, 3}, random_vector(12, rng)));
  Tensor xv({3, 1}, {0.5, -2.0, 1.25});
  auto out = sum(matmul(w, g.constant(xv)));
  auto grads = g.backward(out);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(grads[0](r, c), xv[c]);
}

TEST(Backward, RejectsNonScalarOutput) {
  Graph g;
  auto x = g.leaf(Tensor::vector({1, 2}));
  EXPECT_THROW(g.backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, LeavesValueBuffersUntouched) {
  std::mt19937_64 rng(9);
  Graph g;
  auto w = g.leaf(Tensor({3, 3}, random_vector(9, rng)));
  auto y = sigmoid(matmul(w, w));
  auto before = y.value();
  g.backward(sum(y));
  EXPECT_EQ(y.value(), before);
}

// Two-layer MLP with 20 inputs, checked against central differences.
TEST(Backward, MlpMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const std::size_t n = 6, din = 20, hid = 7, k = 3;
  const auto xv = random_vector(n * din, rng);
  std::vector<int> labels = {0, 1, 2, 1, 0, 2};
  const std::size_t nw1 = hid * din, nb1 = hid, nw2 = k * hid, nb2 = k;
  auto params = random_vector(nw1 + nb1 + nw2 + nb2, rng, 0.4);

  auto build = [&](Graph& g, Var p) {
    auto w1 = slice(p, 0, {hid, din});
    auto b1 = slice(p, nw1, {hid});
    auto w2 = slice(p, nw1 + nb1, {k, hid});
    auto b2 = slice(p, nw1 + nb1 + nw2, {k});
    auto x = g.constant(Tensor({n, din}, xv));
    auto h = relu(add_row(matmul(x, transpose(w1)), b1));
    auto z = add_row(matmul(h, transpose(w2)), b2);
    Tensor onehot = Tensor::zeros({n, k});
    for (std::size_t i = 0; i < n; ++i) onehot(i, labels[i]) = 1;
    return scale(sum(mul(g.constant(onehot), log_softmax(z))), -1.0 / n);
  };
  auto value = [&](const std::vector<double>& p) {
    Graph g;
    return build(g, g.constant(Tensor::vector(p))).item();
  };
  auto grad = gradient(build, Tensor::vector(params));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double fd = bumlab::testing::central_difference(value, params, i);
    EXPECT_LT(bumlab::testing::relative_error(grad[i], fd, 1e-6), 1e-5) << "coordinate " << i;
  }
}

TEST(Backward, DeterministicAcrossRuns) {
  std::mt19937_64 rng(2);
  const auto p = random_vector(30, rng);
  ScalarFn f = [](Graph& g, Var v) {
    auto m = slice(v, 0, {5, 6});
    return sq_norm(sigmoid(matmul(m, transpose(m))));
  };
  auto a = gradient(f, Tensor::vector(p));
  auto b = gradient(f, Tensor::vector(p));
  EXPECT_EQ(a.data(), b.data());
}

// ---------------------------------------------------------------------------

ScalarFn quadratic_form(const std::vector<double>& a, std::size_t d) {
  return [a, d](Graph& g, Var p) {
    auto col = slice(p, 0, {d, 1});
    auto am = g.constant(Tensor({d, d}, a));
    return scale(sum(mul(col, matmul(am, col))), 0.5);
  };
}

TEST(Hvp, QuadraticFormGivesAv) {
  std::mt19937_64 rng(21);
  const std::size_t d = 6;
  auto a = bumlab::testing::random_spd(d, rng);
  auto theta = random_vector(d, rng);
  auto v = random_vector(d, rng);
  auto hv = hessian_vector_product(quadratic_form(a, d), Tensor::vector(theta), Tensor::vector(v));
  auto av = bumlab::testing::matvec(a, v);
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(hv[i], av[i], 1e-12);
}

TEST(Hvp, ZeroDirection) {
  std::mt19937_64 rng(22);
  auto a = bumlab::testing::random_spd(4, rng);
  auto hv = hessian_vector_product(quadratic_form(a, 4), Tensor::vector(random_vector(4, rng)),
                                   Tensor::zeros({4}));
  for (double x : hv.values()) EXPECT_EQ(x, 0.0);
}

TEST(Hvp, LengthMismatchRejected) {
  std::mt19937_64 rng(23);
  auto a = bumlab::testing::random_spd(4, rng);
  EXPECT_THROW(hessian_vector_product(quadratic_form(a, 4), Tensor::zeros({4}), Tensor::zeros({3})),
               ShapeError);
}

struct LogisticProblem {
  bumlab::testing::LogisticOracle oracle;
  ScalarFn loss;
};

LogisticProblem logistic_problem(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto x = random_vector(n * d, rng);
  auto w = random_vector(d, rng);
  std::vector<double> y(n);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0;
    for (std::size_t j = 0; j < d; ++j) z += x[i * d + j] * w[j];
    y[i] = u(rng) < bumlab::testing::sigmoid(z) ? 1.0 : 0.0;
  }
  ScalarFn loss = [x, y, n, d](Graph& g, Var p) {
    auto xs = g.constant(Tensor({n, d}, x));
    auto z = matmul(xs, slice(p, 0, {d, 1}));
    auto ys = g.constant(Tensor({n, 1}, y));
    return mean(sub(softplus(z), mul(ys, z)));
  };
  return {{x, y, n, d}, loss};
}

TEST(Hvp, LogisticRegressionMatchesExplicitHessian) {
  auto prob = logistic_problem(50, 5, 31);
  std::mt19937_64 rng(32);
  auto theta = random_vector(5, rng, 0.5);
  std::vector<double> ones(50, 1.0);
  auto h = prob.oracle.hessian(theta, ones);
  for (int trial = 0; trial < 5; ++trial) {
    auto v = random_vector(5, rng);
    auto hv = hessian_vector_product(prob.loss, Tensor::vector(theta), Tensor::vector(v));
    auto expected = bumlab::testing::matvec(h, v);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(hv[i], expected[i], 1e-6);
  }
}

TEST(Hvp, SymmetricOnConvexLoss) {
  auto prob = logistic_problem(40, 8, 41);
  std::mt19937_64 rng(42);
  auto theta = Tensor::vector(random_vector(8, rng, 0.3));
  for (int trial = 0; trial < 10; ++trial) {
    auto u = Tensor::vector(random_vector(8, rng));
    auto v = Tensor::vector(random_vector(8, rng));
    const double vhu = dot(v.values(), hessian_vector_product(prob.loss, theta, u).values());
    const double uhv = dot(u.values(), hessian_vector_product(prob.loss, theta, v).values());
    EXPECT_NEAR(vhu, uhv, 1e-8);
  }
}

// ---------------------------------------------------------------------------

LinearOp dense_op(std::vector<double> a) {
  return [a = std::move(a)](const Tensor& v) {
    return Tensor::vector(bumlab::testing::matvec(a, v.data()));
  };
}

TEST(CgSolve, IdentityWithDamping) {
  const double lambda = 0.3;
  std::vector<double> r = {1.0, -2.0, 0.5, 4.0};
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto res = cg_solve(dense_op(eye), Tensor::vector(r), lambda, 50, 1e-12);
  EXPECT_TRUE(res.converged);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(res.x[i], r[i] / (1 + lambda), 1e-14);
}

TEST(CgSolve, DiagonalSystem) {
  std::vector<double> h = {1, 0, 0, 0, 2, 0, 0, 0, 4};
  std::vector<double> rhs = {3, 3, 3};
  auto res = cg_solve(dense_op(h), Tensor::vector(rhs), 0.0, 50, 1e-14);
  EXPECT_NEAR(res.x[0], 3.0, 1e-12);
  EXPECT_NEAR(res.x[1], 1.5, 1e-12);
  EXPECT_NEAR(res.x[2], 0.75, 1e-12);
}

TEST(CgSolve, RandomSpdMatchesDenseSolve) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = bumlab::testing::random_spd(12, rng);
    auto b = random_vector(12, rng);
    auto res = cg_solve(dense_op(a), Tensor::vector(b), 0.0, 200, 1e-12);
    auto expect = bumlab::testing::dense_solve(a, b);
    EXPECT_TRUE(res.converged);
    for (std::size_t i = 0; i < 12; ++i)
      EXPECT_LT(bumlab::testing::relative_error(res.x[i], expect[i], 1e-3), 1e-6);
  }
}

TEST(CgSolve, ResidualNonIncreasing) {
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = bumlab::testing::random_spd(20, rng, 0.01);
    auto b = random_vector(20, rng);
    auto res = cg_solve(dense_op(a), Tensor::vector(b), 0.0, 60, 1e-13);
    for (std::size_t k = 1; k < res.residual_history.size(); ++k)
      EXPECT_LE(res.residual_history[k], res.residual_history[k - 1] * (1 + 1e-12)) << "iteration " << k;
  }
}

TEST(CgSolve, ReportsNonConvergence) {
  std::mt19937_64 rng(53);
  auto a = bumlab::testing::random_spd(30, rng, 1e-4);
  auto res = cg_solve(dense_op(a), Tensor::vector(random_vector(30, rng)), 0.0, 3, 1e-14);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations, 3u);
}

TEST(CgSolve, NonFiniteAborts) {
  LinearOp bad = [](const Tensor& v) {
    return Tensor::filled(v.shape(), std::numeric_limits<double>::infinity());
  };
  EXPECT_THROW(cg_solve(bad, Tensor::vector({1, 2}), 0.0, 10, 1e-10), NumericError);
}

TEST(CgSolve, NegativeDampingRejected) {
  EXPECT_THROW(cg_solve(dense_op({1}), Tensor::vector({1}), -1.0, 10, 1e-10), std::invalid_argument);
}

}  // namespace
