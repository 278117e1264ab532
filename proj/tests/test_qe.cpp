// Copyright 2026 The kldwrm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "kldwrm/qe.hpp"
#include "test_util.hpp"

namespace kldwrm {
namespace {

using testing::random_matrix;
using testing::random_vec;
using testing::rel_norm_err;

Vector two(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

// ----------------------------------------------------------------------------
// symmetric KL

TEST(SklGaussian, Examples) {
  EXPECT_EQ(skl_gaussian(two(1.0, 2.0), two(1.0, 2.0)), 0.0);
  EXPECT_DOUBLE_EQ(skl_gaussian(two(1.0, 0.0), two(0.0, 0.0)), 0.5);
  EXPECT_DOUBLE_EQ(skl_gaussian(two(1.0, 2.0), two(0.0, 0.0)), 2.5);
  EXPECT_THROW(skl_gaussian(two(1.0, 2.0), Vector::Zero(3)), DimensionError);
}

// Simpson quadrature of 1/2 KL(N(m1,1) || N(m2,1)) + 1/2 KL(N(m2,1) || N(m1,1)).
double quadrature_skl(double m1, double m2) {
  const auto pdf = [](double x, double m) {
    return std::exp(-0.5 * (x - m) * (x - m)) / std::sqrt(2.0 * std::numbers::pi);
  };
  const auto f = [&](double x) {
    const double p1 = pdf(x, m1), p2 = pdf(x, m2);
    const double l = -0.5 * (x - m1) * (x - m1) + 0.5 * (x - m2) * (x - m2);
    return 0.5 * (p1 - p2) * l;
  };
  constexpr int n = 20000;
  const double lo = std::min(m1, m2) - 15.0, hi = std::max(m1, m2) + 15.0;
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return acc * h / 3.0;
}

TEST(SklGaussian, MatchesQuadrature) {
  for (double d : {0.0, 0.1, 0.5, 1.0, 2.0, 3.0, -2.5}) {
    const double m1 = 0.3;
    EXPECT_NEAR(skl_gaussian(Vector::Constant(1, m1), Vector::Constant(1, m1 + d)),
                quadrature_skl(m1, m1 + d), 1e-6)
        << "gap " << d;
  }
}

TEST(SklCategorical, Examples) {
  const Vector a = two(std::log(0.8), std::log(0.2));
  const Vector b = two(std::log(0.2), std::log(0.8));
  EXPECT_NEAR(skl_categorical(a, b), 0.6 * std::log(4.0), 1e-15);
  EXPECT_NEAR(skl_categorical(a, b), 0.83178, 1e-5);
  EXPECT_EQ(skl_categorical(a, a), 0.0);
  EXPECT_NEAR(skl_categorical(a, Vector(a.array() + 7.0)), 0.0, 1e-15);
  EXPECT_THROW(skl_categorical(Vector::Zero(1), Vector::Zero(1)), DimensionError);
  EXPECT_THROW(skl_categorical(two(std::nan(""), 0.0), a), NumericError);
}

TEST(SklCategorical, SymmetricNonnegative) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const Vector a = 3.0 * random_vec(6, rng);
    const Vector b = 3.0 * random_vec(6, rng);
    const double ab = skl_categorical(a, b);
    EXPECT_EQ(ab, skl_categorical(b, a));
    EXPECT_GT(ab, 0.0);
    EXPECT_LE(skl_categorical(a, Vector(a.array() - 1.5)), 1e-12);
  }
}

TEST(OutputsSkl, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (LossKind kind : {LossKind::kCrossEntropy, LossKind::kGaussian}) {
    const Matrix a = random_matrix(4, 3, rng);
    const Matrix b = random_matrix(4, 3, rng);
    const Matrix grad = outputs_skl_grad(a, b, kind);
    // outputs_skl averages over the 3 columns
    const auto f = [&](const Vector& x) { return 3.0 * outputs_skl(a, unvec(x, 4, 3), kind); };
    const Vector fd = testing::central_diff(f, vec(b), 1e-6);
    EXPECT_LE(rel_norm_err(vec(grad), fd), 1e-8);
  }
}

TEST(DatasetSkl, Examples) {
  const Network net = make_mlp({3, 5, 2}, LossKind::kGaussian);
  std::mt19937_64 rng(3);
  const NetParams a = init_params(net, rng);
  const Matrix x = random_matrix(3, 10, rng);
  EXPECT_EQ(dataset_skl(net, a, a, x), 0.0);

  NetParams b = a;
  const Vector shift = random_vec(2, rng);
  b.W[1].col(5) += shift;
  EXPECT_NEAR(dataset_skl(net, a, b, x), 0.5 * shift.squaredNorm(), 1e-14);

  const Network cls = make_mlp({3, 4}, LossKind::kCrossEntropy);
  const NetParams c = init_params(cls, rng), d = init_params(cls, rng);
  const Matrix one = x.col(0);
  EXPECT_NEAR(dataset_skl(cls, c, d, one),
              skl_categorical(forward(cls, c, one).outputs.col(0),
                              forward(cls, d, one).outputs.col(0)),
              1e-15);
  EXPECT_THROW(dataset_skl(net, a, c, x), DimensionError);
}

// For small s the SKL is the Fisher quadratic form 1/2 s^T F s.
TEST(DatasetSkl, LocallyQuadraticInFisher) {
  const Network net = make_mlp({3, 4, 3}, LossKind::kCrossEntropy);
  std::mt19937_64 rng(4);
  const NetParams p = init_params(net, rng);
  const Matrix x = random_matrix(3, 6, rng);
  const Index d = net.param_count();

  // Fisher by exact expectation over labels of per-sample score outer products
  Matrix F = Matrix::Zero(d, d);
  const Matrix prob = softmax(forward(net, p, x).outputs);
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index y = 0; y < 3; ++y) {
      Targets t;
      t.classes = {y};
      const Vector g = loss_grad(net, p, x.col(j), t, LossKind::kCrossEntropy).grad;
      F += prob(y, j) * g * g.transpose();
    }
  }
  F /= static_cast<double>(x.cols());

  std::uniform_real_distribution<double> unit(-1e-3, 1e-3);
  for (int t = 0; t < 10; ++t) {
    Vector s(d);
    for (Index i = 0; i < d; ++i) s(i) = unit(rng);
    const double skl = dataset_skl(net, p, unflatten(net, flatten(p) + s), x);
    const double quad = 0.5 * s.dot(F * s);
    EXPECT_NEAR(skl, quad, 0.1 * quad);
  }
}

// ----------------------------------------------------------------------------
// snapshots and weights

TEST(SnapshotRing, EvictsOldest) {
  const Network net = make_mlp({2, 2}, LossKind::kGaussian);
  SnapshotRing ring(2);
  NetParams p = zero_params(net);
  for (Index b = 0; b < 4; ++b) {
    p.W[0](0, 0) = static_cast<double>(b);
    ring.push(p, b);
  }
  ASSERT_EQ(ring.size(), 2);
  EXPECT_EQ(ring.entries()[0].birth, 2);
  EXPECT_EQ(ring.entries()[1].params.W[0](0, 0), 3.0);
  p.W[0](0, 0) = 99.0;
  EXPECT_EQ(ring.entries()[1].params.W[0](0, 0), 3.0);
  EXPECT_THROW(ring.push(p, 3), ConfigError);

  SnapshotRing none(0);
  none.push(p, 0);
  EXPECT_EQ(none.size(), 0);
  EXPECT_THROW(SnapshotRing(-1), ConfigError);
}

TEST(QEConfig, Validation) {
  QEConfig cfg;
  EXPECT_EQ(cfg.n_is, 10);
  EXPECT_DOUBLE_EQ(cfg.omega, 0.07);
  EXPECT_EQ(cfg.n_cap, 4);
  EXPECT_NO_THROW(cfg.validate());
  cfg.omega = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = QEConfig{};
  cfg.n_is = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(WakeWeight, Values) {
  EXPECT_DOUBLE_EQ(wake_weight(0, 0, 2.0, 0.5, 0.1), 0.2);
  EXPECT_DOUBLE_EQ(wake_weight(0, 2, 1.0, 0.5, 1.0), 0.25);
  EXPECT_DOUBLE_EQ(wake_weight(3, 5, 4.0, 0.5, 1.0), 4.0 * 0.5 * 0.25);
  EXPECT_DOUBLE_EQ(wake_weight(5, 5, 4.0, 0.5, 1.0), 2.0);
}

// ----------------------------------------------------------------------------
// inner objective and step

struct Instance {
  Network net;
  NetParams theta;
  Matrix x;
  Vector g;
  std::unique_ptr<KroneckerCurvature> curv;
  SnapshotRing ring{4};
};

Instance make_instance(LossKind kind, std::uint64_t seed, double lambda, double rho,
                       const QEConfig& cfg, QEProblem& problem) {
  Instance in;
  const Index out = kind == LossKind::kCrossEntropy ? 3 : 2;
  in.net = make_mlp({3, 4, out}, kind);
  std::mt19937_64 rng(seed);
  in.x = random_matrix(3, 8, rng);
  in.curv = std::make_unique<KroneckerCurvature>(in.net, rho, 0.01);
  NetParams p = init_params(in.net, rng);
  for (Index e = 0; e < 3; ++e) {
    in.ring.push(p, e);
    in.curv->refresh(sampled_factors(in.net, p, forward(in.net, p, in.x), rng));
    p = unflatten(in.net, flatten(p) + 0.1 * random_vec(in.net.param_count(), rng));
  }
  in.curv->refresh(sampled_factors(in.net, p, forward(in.net, p, in.x), rng));
  in.theta = p;
  Targets t = sample_labels(in.net, p, in.x, rng);
  in.g = loss_grad(in.net, p, in.x, t, kind).grad;
  KroneckerCurvature* c = in.curv.get();
  problem = make_qe_problem(
      in.net, in.theta, in.x, in.g, [c](const Vector& v) { return c->apply_model_curvature(v); },
      in.ring, 3, lambda, rho, cfg);
  return in;
}

TEST(QEObjective, ProblemHasOneTermPerSnapshotPlusLive) {
  QEProblem p;
  const Instance in = make_instance(LossKind::kCrossEntropy, 5, 10.0, 0.5, QEConfig{}, p);
  ASSERT_EQ(p.weights.size(), 4u);
  EXPECT_DOUBLE_EQ(p.weights[0], wake_weight(0, 3, 10.0, 0.5, 1.0 / 330.0));
  EXPECT_DOUBLE_EQ(p.weights[3], wake_weight(3, 3, 10.0, 0.5, 1.0 / 330.0));
  EXPECT_THROW(make_qe_problem(in.net, in.theta, in.x, in.g, p.apply_B, in.ring, 2, 10.0, 0.5,
                               QEConfig{}),
               ConfigError);
}

TEST(QEObjective, ZeroWeightsLeaveQuadratic) {
  QEConfig cfg;
  cfg.zeta_scale = 0.0;
  QEProblem p;
  const Instance in = make_instance(LossKind::kGaussian, 6, 10.0, 0.5, cfg, p);
  std::mt19937_64 rng(7);
  const Vector s = 0.1 * random_vec(in.g.size(), rng);
  const ValueGrad vg = qe_objective_grad(p, s);
  EXPECT_LE(rel_norm_err(vg.grad, in.g + in.curv->apply_model_curvature(s)), 1e-14);
}

TEST(QEObjective, LiveTermIsStationaryAtZero) {
  QEProblem p;
  const Instance in = make_instance(LossKind::kCrossEntropy, 8, 10.0, 0.5, QEConfig{}, p);
  SnapshotRing empty(4);
  const QEProblem live = make_qe_problem(in.net, in.theta, in.x, in.g, p.apply_B, empty, 3,
                                         10.0, 0.5, QEConfig{});
  const ValueGrad vg = qe_objective_grad(live, Vector::Zero(in.g.size()));
  EXPECT_LE((vg.grad - in.g).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(vg.value, 0.0);
}

TEST(QEObjective, GradientMatchesFiniteDifferences) {
  for (LossKind kind : {LossKind::kCrossEntropy, LossKind::kGaussian}) {
    for (std::uint64_t seed : {9u, 10u, 11u}) {
      QEConfig cfg;
      cfg.zeta_scale = 0.5;  // make the SKL terms visible next to the quadratic
      QEProblem p;
      const Instance in = make_instance(kind, seed, 10.0, 0.5, cfg, p);
      std::mt19937_64 rng(seed);
      const Vector s = 0.05 * random_vec(in.g.size(), rng);
      const auto f = [&](const Vector& v) { return qe_objective_grad(p, v).value; };
      const Vector fd = testing::central_diff(f, s, 1e-5);
      EXPECT_LE(testing::max_coord_rel_err(qe_objective_grad(p, s).grad, fd), 1e-4);
    }
  }
}

TEST(QEStep, NoInnerStepsIsQStep) {
  QEConfig cfg;
  cfg.n_is = 0;
  QEProblem p;
  Instance in = make_instance(LossKind::kCrossEntropy, 12, 10.0, 0.5, cfg, p);
  StepState sa(in.g.size(), 0.5), sb(in.g.size(), 0.5);
  KroneckerCurvature copy = *in.curv;
  EXPECT_EQ(qe_step(*in.curv, p, sa, 10.0, cfg), q_step(copy, in.g, sb, 10.0));
  EXPECT_EQ(sa.g_hat, sb.g_hat);
  EXPECT_EQ(sa.prev_Mg, sb.prev_Mg);
}

TEST(QEStep, DefaultConfigurationRuns) {
  const QEConfig cfg;
  QEProblem p;
  Instance in = make_instance(LossKind::kCrossEntropy, 13, 10.0, 0.5, cfg, p);
  StepState state(in.g.size(), 0.5);
  KroneckerCurvature copy = *in.curv;
  StepState q_state(in.g.size(), 0.5);
  const Vector q = q_step(copy, in.g, q_state, 10.0);
  const Vector s = qe_step(*in.curv, p, state, 10.0, cfg);
  EXPECT_TRUE(s.allFinite());
  EXPECT_GT((s - q).norm(), 0.0);
  EXPECT_EQ(state.g_hat, q_state.g_hat);
  EXPECT_EQ(state.k, 1);
}

// Linear net with a Gaussian head: the inner objective is a convex quadratic
// with Hessian H = B + sum_t w_t (x x^T (x) I), so gradient descent below 1/L
// never increases it.
TEST(QEStep, InnerLoopDescendsOnConvexInstance) {
  Network net;
  net.layers.push_back({3, 2, Activation::kIdentity});
  std::mt19937_64 rng(14);
  const Matrix x = random_matrix(3, 10, rng);
  KroneckerCurvature curv(net, 0.5, 0.01);
  SnapshotRing ring(4);
  NetParams p = init_params(net, rng);
  for (Index e = 0; e < 2; ++e) {
    ring.push(p, e);
    curv.refresh(sampled_factors(net, p, forward(net, p, x), rng));
    p = unflatten(net, flatten(p) + 0.2 * random_vec(net.param_count(), rng));
  }
  curv.refresh(sampled_factors(net, p, forward(net, p, x), rng));
  const Vector g = random_vec(net.param_count(), rng);
  const double lambda = 1.0;
  QEConfig cfg;
  cfg.zeta_scale = 1.0;
  const QEProblem prob = make_qe_problem(
      net, p, x, g, [&](const Vector& v) { return curv.apply_model_curvature(v); }, ring, 2,
      lambda, 0.5, cfg);

  const Index d = net.param_count();
  Matrix H(d, d);
  for (Index j = 0; j < d; ++j) {
    const Vector e = Vector::Unit(d, j);
    H.col(j) = qe_objective_grad(prob, e).grad - qe_objective_grad(prob, Vector::Zero(d)).grad;
  }
  const double L = spectral_norm(H);
  cfg.omega = 0.9 * lambda / L;

  StepState state(d, 0.5);
  KroneckerCurvature copy = curv;
  const Vector s0 = q_step(copy, g, state, lambda);
  double prev = qe_objective_grad(prob, s0).value;
  for (Index n = 1; n <= 10; ++n) {
    cfg.n_is = n;
    const double v = qe_objective_grad(prob, detail::qe_refine(prob, s0, lambda, cfg)).value;
    EXPECT_LE(v, prev + 1e-12) << "iteration " << n;
    prev = v;
  }
}

TEST(QEStep, InnerDivergenceThrows) {
  QEConfig cfg;
  cfg.omega = 1e6;
  QEProblem p;
  Instance in = make_instance(LossKind::kGaussian, 15, 1.0, 0.5, cfg, p);
  StepState state(in.g.size(), 0.5);
  EXPECT_THROW(qe_step(*in.curv, p, state, 1.0, cfg), NumericError);
}

TEST(QEStep, QInitialGuessUsuallyImproves) {
  int better = 0;
  constexpr int kTrials = 20;
  for (int t = 0; t < kTrials; ++t) {
    QEProblem p;
    Instance in = make_instance(LossKind::kCrossEntropy, 100 + t, 10.0, 0.5, QEConfig{}, p);
    StepState state(in.g.size(), 0.5);
    const Vector s = q_step(*in.curv, in.g, state, 10.0);
    if (qe_objective_grad(p, s).grad.norm() <= qe_objective_grad(p, Vector::Zero(s.size())).grad.norm()) {
      ++better;
    }
  }
  RecordProperty("q_guess_improves_fraction", std::to_string(better / double(kTrials)));
  std::printf("Q initial guess reduced the inner gradient norm on %d of %d instances\n", better,
              kTrials);
}

}  // namespace
}  // namespace kldwrm
