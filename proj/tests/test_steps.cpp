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
#include <random>

#include "kldwrm/oracle.hpp"
#include "kldwrm/steps.hpp"
#include "kldwrm/verify.hpp"
#include "test_util.hpp"

namespace kldwrm {
namespace {

using testing::max_abs_diff;
using testing::random_spd;
using testing::random_vec;
using testing::rel_norm_err;

KronFactors random_factors(const Network& net, std::mt19937_64& rng) {
  KronFactors f;
  for (const auto& layer : net.layers) {
    f.A.push_back(random_spd(layer.in_dim + 1, rng));
    f.G.push_back(random_spd(layer.out_dim, rng));
  }
  return f;
}

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }

// ----------------------------------------------------------------------------
// woqm / so

TEST(Woqm, IdentityCurvatureIsGradientDescent) {
  DenseCurvature curv(0.5);
  curv.set(Matrix::Identity(5, 5));
  std::mt19937_64 rng(1);
  const Vector g = random_vec(5, rng);
  EXPECT_EQ(woqm_step(curv, g, 1.0), -g);
}

TEST(Woqm, FirstStepIsInverseCurvatureTimesGradient) {
  std::mt19937_64 rng(2);
  const Matrix B = random_spd(4, rng);
  const Vector g = random_vec(4, rng);
  DenseCurvature curv(0.9);
  curv.push(B);
  EXPECT_LE(rel_norm_err(woqm_step(curv, g, 20.0), -(1.0 / 20.0) * B.inverse() * g), 1e-12);
}

TEST(Woqm, RejectsBadArguments) {
  DenseCurvature curv(0.5);
  curv.set(Matrix::Identity(3, 3));
  EXPECT_THROW(woqm_step(curv, Vector::Zero(4), 1.0), DimensionError);
  EXPECT_THROW(woqm_step(curv, Vector::Zero(3), 0.0), ConfigError);
  DenseCurvature empty(0.5);
  EXPECT_THROW(empty.solve_ea(Vector::Zero(3)), Error);
}

TEST(So, FirstStepEqualsWoqm) {
  std::mt19937_64 rng(3);
  DenseCurvature curv(0.33);
  curv.push(random_spd(4, rng));
  const Vector g = random_vec(4, rng);
  StepState state(4, 0.33);
  EXPECT_EQ(so_step(curv, g, state, 5.0), woqm_step(curv, g, 5.0));
  EXPECT_EQ(state.prev_g, g);
  EXPECT_EQ(state.k, 1);
}

TEST(So, ScalarHandExample) {
  DenseCurvature curv(0.5);
  curv.set(scalar(1.5));
  StepState state(1, 0.5);
  state.prev_g = Vector::Constant(1, 1.0);
  state.k = 1;
  EXPECT_NEAR(so_step(curv, Vector::Constant(1, 1.0), state, 1.0)(0), -1.0 / 3.0, 1e-15);
}

TEST(So, EqualsWoqmOnModifiedGradient) {
  std::mt19937_64 rng(4);
  DenseCurvature curv(0.5);
  StepState state(6, 0.5);
  Vector prev = Vector::Zero(6);
  for (int k = 0; k < 10; ++k) {
    curv.push(random_spd(6, rng));
    const Vector g = random_vec(6, rng);
    const Vector expect = woqm_step(curv, Vector(g - 0.5 * prev), 3.0);
    EXPECT_EQ(so_step(curv, g, state, 3.0), expect);
    prev = g;
  }
}

TEST(So, RhoZeroIsNaturalGradient) {
  std::mt19937_64 rng(5);
  DenseCurvature curv(0.0);
  StepState state(3, 0.0);
  for (int k = 0; k < 4; ++k) {
    const Matrix F = random_spd(3, rng);
    curv.push(F);
    const Vector g = random_vec(3, rng);
    EXPECT_LE(rel_norm_err(so_step(curv, g, state, 2.0), -0.5 * F.inverse() * g), 1e-12);
  }
}

// ----------------------------------------------------------------------------
// q

TEST(Q, FirstStepFormula) {
  std::mt19937_64 rng(6);
  const Matrix F = random_spd(5, rng);
  const Matrix B = random_spd(5, rng);
  const Vector g = random_vec(5, rng);
  DenseCurvature curv(0.5);
  curv.push(F, B);
  StepState state(5, 0.5);
  const double lambda = 4.0;
  const Vector s = q_step(curv, g, state, lambda);
  EXPECT_LE(rel_norm_err(s, -(1.0 / lambda) * (F + B / lambda).inverse() * g), 1e-12);
  EXPECT_EQ(state.g_hat, g);
}

TEST(Q, WithoutModelCurvatureIsSoBitwise) {
  std::mt19937_64 rng(7);
  for (double rho : {0.0, 0.33, 0.95}) {
    DenseCurvature a(rho), b(rho);
    StepState sa(5, rho), sb(5, rho);
    for (int k = 0; k < 15; ++k) {
      const Matrix F = random_spd(5, rng);
      a.push(F);
      b.push(F);
      const Vector g = random_vec(5, rng);
      EXPECT_EQ(q_step(a, g, sa, 10.0), so_step(b, g, sb, 10.0)) << "rho " << rho << " k " << k;
    }
  }
}

TEST(Q, ConstantScheduleIsBitIdentical) {
  std::mt19937_64 rng(8);
  DenseCurvature a(0.5), b(0.5);
  StepState sa(4, 0.5), sb(4, 0.5);
  for (int k = 0; k < 12; ++k) {
    const Matrix F = random_spd(4, rng);
    const Matrix B = random_spd(4, rng);
    a.push(F, B);
    b.push(F, B);
    const Vector g = random_vec(4, rng);
    EXPECT_EQ(q_step(a, g, sa, 3.0), q_step_variable_lambda(b, g, sb, 3.0));
  }
}

TEST(Q, VariableLambdaWithoutModelCurvatureIsSoClosedForm) {
  std::mt19937_64 rng(9);
  const auto lam = [](Index k) { return 100.0 / (1.0 + 0.1 * static_cast<double>(k)); };
  DenseCurvature curv(0.5);
  StepState state(4, 0.5);
  Vector prev = Vector::Zero(4);
  for (Index k = 0; k < 10; ++k) {
    const Matrix F = random_spd(4, rng);
    curv.push(F);
    const Vector g = random_vec(4, rng);
    const Vector s = q_step_variable_lambda(curv, g, state, lam(k));
    const Vector rhs = k == 0 ? Vector(g / lam(0)) : Vector(g / lam(k) - 0.5 * prev / lam(k - 1));
    EXPECT_LE(rel_norm_err(s, -curv.F_bar().inverse() * rhs), 1e-10) << "k " << k;
    prev = g;
  }
}

TEST(Q, DenseRecursionMatchesWakeOracleAtEveryStep) {
  std::mt19937_64 rng(10);
  for (double rho : {0.0, 0.33, 0.5, 0.95}) {
    for (double lambda : {1.0, 100.0}) {
      oracle::WakeHistory h;
      h.rho = rho;
      h.lambda = lambda;
      DenseCurvature curv(rho);
      StepState state(8, rho);
      for (Index k = 0; k <= 12; ++k) {
        h.g.push_back(random_vec(8, rng));
        h.F.push_back(random_spd(8, rng));
        h.B.push_back(random_spd(8, rng));
        curv.push(h.F.back(), h.B.back());
        const Vector s = q_step(curv, h.g.back(), state, lambda);
        EXPECT_LE(rel_norm_err(s, oracle::solve_q_dense(h, k)), 1e-8)
            << "rho " << rho << " lambda " << lambda << " k " << k;
      }
    }
  }
}

TEST(Q, VerificationSuitesOnReducedGrid) {
  verify::Grid grid;
  grid.instances = 8;
  grid.steps = 15;
  grid.seed = 3;
  for (const auto& rep : {verify::verify_woqm(grid), verify::verify_so(grid),
                          verify::verify_q(grid), verify::verify_q_varlambda(8, 15, 3)}) {
    EXPECT_LE(rep.max_error, 1e-8) << rep.name;
    EXPECT_TRUE(rep.bit_identical) << rep.name;
  }
  EXPECT_LE(verify::verify_kld_form(8, 3).max_error, 1e-10);
}

TEST(Q, DivergenceGuard) {
  const Vector g = Vector::Ones(3);
  EXPECT_NO_THROW(detail::check_g_hat(Vector(1e5 * g), g, 4));
  EXPECT_THROW(detail::check_g_hat(Vector(1e7 * g), g, 4), NumericError);
  Vector bad = g;
  bad(1) = std::nan("");
  EXPECT_THROW(detail::check_g_hat(bad, g, 4), NumericError);
}

// ----------------------------------------------------------------------------
// contraction operator

TEST(Contraction, DenseMatchesDefinition) {
  std::mt19937_64 rng(11);
  const Matrix F = random_spd(6, rng);
  const Matrix B = random_spd(6, rng);
  DenseCurvature curv(0.5);
  curv.push(F, B);
  for (double lambda : {0.5, 1.0, 100.0}) {
    const Matrix M = (Matrix::Identity(6, 6) + B * F.inverse() / lambda).inverse();
    const Vector v = random_vec(6, rng);
    EXPECT_LE(rel_norm_err(curv.apply_contraction(v, lambda), M * v), 1e-10);
    EXPECT_LE(max_abs_diff(curv.contraction_matrix(lambda), M), 1e-10);
  }
}

TEST(Contraction, IdentityWithoutModelCurvature) {
  std::mt19937_64 rng(12);
  DenseCurvature curv(0.5);
  curv.push(random_spd(4, rng));
  const Vector v = random_vec(4, rng);
  EXPECT_EQ(curv.apply_contraction(v, 2.0), v);
  EXPECT_EQ(curv.contraction_matrix(2.0), Matrix::Identity(4, 4));
}

TEST(Contraction, LargeLambdaApproachesIdentity) {
  std::mt19937_64 rng(13);
  const Matrix F = random_spd(6, rng);
  DenseCurvature curv(0.5);
  curv.push(F, F);
  const Vector v = random_vec(6, rng);
  EXPECT_LE((curv.apply_contraction(v, 1e12) - v).norm(), 1e-8 * v.norm());

  const Network net = make_mlp({3, 2, 2}, LossKind::kGaussian);
  KroneckerCurvature kc(net, 0.5, 0.0);
  kc.refresh(random_factors(net, rng));
  kc.refresh(random_factors(net, rng));
  const Vector w = random_vec(kc.dim(), rng);
  EXPECT_LE((kc.apply_contraction(w, 1e12) - w).norm(), 1e-8 * w.norm());
}

// ----------------------------------------------------------------------------
// reweighted Kronecker factors

TEST(HatFactors, Coefficients) {
  Network net;
  net.layers.push_back({1, 2, Activation::kIdentity});
  std::mt19937_64 rng(14);
  EAState prev(0.5, 0.0);
  prev.update(random_factors(net, rng));
  const KronFactors fresh = random_factors(net, rng);
  const HatFactors h = build_hat_factors(prev, fresh, 1.0, 0.0);
  EXPECT_LE(max_abs_diff(h.A_hat[0], 0.5 * prev.factors().A[0] + 1.5 * fresh.A[0]), 1e-15);
  EXPECT_LE(max_abs_diff(h.G_hat[0], 0.5 * prev.factors().G[0] + 1.5 * fresh.G[0]), 1e-15);
  EXPECT_LE(max_abs_diff(h.A_hat_inv[0] * h.A_hat[0], Matrix::Identity(2, 2)), 1e-12);
}

TEST(HatFactors, IdentityFactors) {
  Network net;
  net.layers.push_back({2, 3, Activation::kIdentity});
  KronFactors id;
  id.A.push_back(Matrix::Identity(3, 3));
  id.G.push_back(Matrix::Identity(3, 3));
  for (double rho : {0.0, 0.33, 0.95}) {
    for (double lambda : {0.5, 1.0, 100.0}) {
      EAState prev(rho, 0.01);
      prev.update(id);
      const HatFactors h = build_hat_factors(prev, id, lambda, 0.01);
      const double c = rho + ((1.0 - rho) * lambda + 1.0) / lambda;
      EXPECT_LE(max_abs_diff(h.A_hat[0], c * Matrix::Identity(3, 3)), 1e-14);
    }
  }
}

TEST(HatFactors, LargeLambdaWithoutDecayApproachesFresh) {
  Network net;
  net.layers.push_back({2, 2, Activation::kIdentity});
  std::mt19937_64 rng(15);
  EAState prev(0.0, 0.0);
  prev.update(random_factors(net, rng));
  const KronFactors fresh = random_factors(net, rng);
  const HatFactors h = build_hat_factors(prev, fresh, 1e12, 0.0);
  EXPECT_LE(max_abs_diff(h.A_hat[0], fresh.A[0]), 1e-10);
}

TEST(HatFactors, FirstRefreshScalesFresh) {
  Network net;
  net.layers.push_back({2, 2, Activation::kIdentity});
  std::mt19937_64 rng(16);
  const KronFactors fresh = random_factors(net, rng);
  const HatFactors h = build_hat_factors(EAState(0.5, 0.0), fresh, 4.0, 0.0);
  EXPECT_LE(max_abs_diff(h.A_hat[0], 1.25 * fresh.A[0]), 1e-15);
  EXPECT_THROW(build_hat_factors(EAState(0.5, 0.0), fresh, 0.0, 0.0), ConfigError);
}

// The Kronecker contraction is vec(G_bar G_hat^-1 V A_hat^-1 A_bar), i.e. the
// dense operator (A_bar A_hat^-1) (x) (G_bar G_hat^-1) per layer.
TEST(HatM, MatchesDenseMaterialization) {
  const Network net = make_mlp({3, 2, 2}, LossKind::kGaussian);
  std::mt19937_64 rng(17);
  KroneckerCurvature kc(net, 0.5, 0.01);
  for (int r = 0; r < 3; ++r) kc.refresh(random_factors(net, rng));
  const double lambda = 2.0;
  const Vector v = random_vec(kc.dim(), rng);
  const Vector got = kc.apply_contraction(v, lambda);

  EAState prev(0.5, 0.01);
  // rebuild the previous EA from the public state: Abar_prev = (Abar - (1-rho) A) / rho
  KronFactors bar_prev;
  for (std::size_t l = 0; l < 2; ++l) {
    bar_prev.A.push_back((kc.ea().factors().A[l] - 0.5 * kc.fresh().A[l]) / 0.5);
    bar_prev.G.push_back((kc.ea().factors().G[l] - 0.5 * kc.fresh().G[l]) / 0.5);
  }
  prev.update(bar_prev);
  const HatFactors h = build_hat_factors(prev, kc.fresh(), lambda, 0.01);
  KronFactors op;
  for (std::size_t l = 0; l < 2; ++l) {
    op.A.push_back(kc.ea().factors().A[l] * h.A_hat_inv[l]);
    op.G.push_back(kc.ea().factors().G[l] * h.G_hat_inv[l]);
  }
  const Vector dense = kron_block_diag(op) * v;
  EXPECT_LE(rel_norm_err(got, dense), 1e-10);
  EXPECT_LE(rel_norm_err(hatM_apply(kc.ea(), h, v), dense), 1e-10);
}

// With a single EA term both factors are scaled by (1 + 1/lambda), so the
// Kronecker contraction is (lambda / (lambda + 1))^2 I while the exact dense
// contraction of B = F is (lambda / (lambda + 1)) I.
TEST(HatM, FirstRefreshScalesBothFactors) {
  const Network net = make_mlp({2, 3}, LossKind::kGaussian);
  std::mt19937_64 rng(18);
  KroneckerCurvature kc(net, 0.5, 0.0);
  const KronFactors f = random_factors(net, rng);
  kc.refresh(f);
  const Vector v = random_vec(kc.dim(), rng);
  for (double lambda : {1.0, 10.0}) {
    const double r = lambda / (lambda + 1.0);
    EXPECT_LE(rel_norm_err(kc.apply_contraction(v, lambda), r * r * v), 1e-12);

    DenseCurvature dense(0.5);
    const Matrix F = kron_block_diag(f);
    dense.push(F, F);
    EXPECT_LE(rel_norm_err(dense.apply_contraction(v, lambda), r * v), 1e-12);
  }
}

TEST(Kronecker, SolvesMatchDenseBlocks) {
  const Network net = make_mlp({3, 4, 2}, LossKind::kCrossEntropy);
  std::mt19937_64 rng(19);
  KroneckerCurvature kc(net, 0.95, 0.01);
  EXPECT_THROW(kc.solve_ea(Vector::Zero(kc.dim())), Error);
  for (int r = 0; r < 2; ++r) kc.refresh(random_factors(net, rng));
  const Vector v = random_vec(kc.dim(), rng);

  KronFactors damped;
  for (std::size_t l = 0; l < 2; ++l) {
    const Index a = kc.ea().factors().A[l].rows();
    const Index g = kc.ea().factors().G[l].rows();
    damped.A.push_back(kc.ea().factors().A[l] + 0.01 * Matrix::Identity(a, a));
    damped.G.push_back(kc.ea().factors().G[l] + 0.01 * Matrix::Identity(g, g));
  }
  const Matrix Fd = kron_block_diag(damped);
  EXPECT_LE(rel_norm_err(kc.solve_ea(v), Fd.llt().solve(v)), 1e-10);
  EXPECT_LE(rel_norm_err(kc.apply_model_curvature(v), kron_block_diag(kc.fresh()) * v), 1e-12);

  kc.set_zero_model_curvature(true);
  EXPECT_EQ(kc.solve_regularized(v, 3.0), kc.solve_ea(v));
  EXPECT_EQ(kc.apply_contraction(v, 3.0), v);
}

TEST(Kronecker, QWithoutModelCurvatureIsSoBitwise) {
  const Network net = make_mlp({4, 3, 2}, LossKind::kCrossEntropy);
  std::mt19937_64 rng(20);
  KroneckerCurvature a(net, 0.5, 0.01), b(net, 0.5, 0.01);
  a.set_zero_model_curvature(true);
  StepState sa(a.dim(), 0.5), sb(b.dim(), 0.5);
  for (int k = 0; k < 8; ++k) {
    if (k % 3 == 0) {
      const KronFactors f = random_factors(net, rng);
      a.refresh(f);
      b.refresh(f);
    }
    const Vector g = random_vec(a.dim(), rng);
    EXPECT_EQ(q_step(a, g, sa, 5.0), so_step(b, g, sb, 5.0));
  }
}

// ----------------------------------------------------------------------------
// boundedness

TEST(Boundedness, TrivialCases) {
  std::mt19937_64 rng(21);
  const Matrix M = random_spd(4, rng);
  EXPECT_EQ(boundedness_margin(0.0, M), 0.0);
  EXPECT_EQ(boundedness_margin(0.7, Matrix::Identity(4, 4)), 0.0);
  EXPECT_THROW(boundedness_margin(0.5, Matrix::Zero(2, 3)), DimensionError);
}

TEST(Boundedness, PowerIterationMatchesEigendecomposition) {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 10; ++t) {
    const Matrix F = random_spd(6, rng);
    const Matrix B = random_spd(6, rng);
    DenseCurvature curv(0.5);
    curv.push(F, B);
    const Matrix N = Matrix::Identity(6, 6) - curv.contraction_matrix(1.0);
    const double exact = std::sqrt(sym_eig(Matrix(N.transpose() * N)).values(0));
    EXPECT_NEAR(boundedness_margin(0.5, curv.contraction_matrix(1.0)), 0.5 * exact, 1e-8);
    EXPECT_NEAR(spectral_norm(N), exact, 1e-8);
  }
}

TEST(Boundedness, RecursionStaysWithinBound) {
  const auto rep = verify::verify_boundedness(4, 500, 0.9, 0.95, 1.0, 5);
  EXPECT_LE(rep.max_margin, 0.95);
  EXPECT_LE(rep.max_excess, 1e-9);
  EXPECT_LE(rep.max_margin_eig_gap, 1e-8);
}

// ----------------------------------------------------------------------------
// clipping

TEST(Clip, UnderThresholdUnchanged) {
  Vector s = Vector::Constant(4, 0.01);
  EXPECT_EQ(clip_step(s, {ClipMode::kGlobal, 0.1, 2.0}, {0, 4}), s);
  EXPECT_EQ(clip_step(s, {ClipMode::kPerGroup, 0.1, 2.0}, {0, 2, 4}), s);
  EXPECT_EQ(clip_step(Vector::Constant(4, 1e3), {ClipMode::kNone, 0.1, 2.0}, {0, 4}),
            Vector::Constant(4, 1e3));
}

TEST(Clip, SingleGroupHalved) {
  const Vector s = Vector::Constant(9, 4.0);  // ||s|| / sqrt(9) = 4 = 2 tau
  const Vector c = clip_step(s, {ClipMode::kPerGroup, 0.1, 2.0}, {0, 9});
  EXPECT_LE((c - 0.5 * s).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Clip, GlobalRescalesToThreshold) {
  std::mt19937_64 rng(23);
  const Vector s = random_vec(10, rng);
  const Vector c = clip_step(s, {ClipMode::kGlobal, 0.1, 2.0}, {0, 10});
  EXPECT_NEAR(c.norm(), 0.1, 1e-15);
  EXPECT_LE(rel_norm_err(c, s * (0.1 / s.norm())), 1e-15);
}

TEST(Clip, PerGroupTouchesOnlyOffenders) {
  Vector s(6);
  s << 0.1, 0.2, 0.3, 10.0, -10.0, 10.0;
  const Vector c = clip_step(s, {ClipMode::kPerGroup, 0.1, 2.0}, {0, 3, 6});
  EXPECT_EQ(c.head(3), s.head(3));
  EXPECT_NEAR(c.tail(3).norm() / std::sqrt(3.0), 2.0, 1e-14);
}

TEST(Clip, IdempotentAndHomogeneousSafe) {
  std::mt19937_64 rng(24);
  const std::vector<Index> groups{0, 3, 10, 11, 20};
  for (int t = 0; t < 200; ++t) {
    const Vector s = 5.0 * random_vec(20, rng);
    for (ClipMode mode : {ClipMode::kGlobal, ClipMode::kPerGroup}) {
      const ClipPolicy p{mode, 0.1, 2.0};
      const Vector once = clip_step(s, p, groups);
      EXPECT_EQ(clip_step(once, p, groups), once);
      for (double alpha : {0.25, 1.0}) {
        const Vector c = clip_step(Vector(alpha * s), p, groups);
        if (mode == ClipMode::kGlobal) {
          EXPECT_LE(c.norm(), 0.1 * (1.0 + 1e-12));
        } else {
          for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
            const Index n = groups[g + 1] - groups[g];
            EXPECT_LE(c.segment(groups[g], n).norm() / std::sqrt(static_cast<double>(n)),
                      2.0 * (1.0 + 1e-12));
          }
        }
      }
    }
  }
}

TEST(Clip, RejectsBadGroups) {
  const Vector s = Vector::Ones(4);
  EXPECT_THROW(clip_step(s, {ClipMode::kPerGroup, 0.1, 2.0}, {0, 2, 2, 4}), DimensionError);
  EXPECT_THROW(clip_step(s, {ClipMode::kPerGroup, 0.1, 2.0}, {0, 3}), DimensionError);
  EXPECT_THROW(clip_step(s, {ClipMode::kGlobal, 0.0, 2.0}, {0, 4}), ConfigError);
}

}  // namespace
}  // namespace kldwrm
