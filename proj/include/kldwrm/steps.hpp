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

// Closed-form step engines over an exponentially averaged curvature F_bar:
//
//   woqm:  s_k = -(1/lambda) F_bar_k^{-1} g_k
//   so:    s_k = -(1/lambda) F_bar_k^{-1} (g_k - rho g_{k-1}),   g_{-1} = 0
//   q:     s_k = -(1/lambda_k) [F_bar_k + B_k / lambda_k]^{-1} g_hat_k
//          g_hat_0 = g_0
//          g_hat_{k+1} = g_{k+1} + (lambda_{k+1}/lambda_k) rho (g_hat_k - M_k g_hat_k - g_k)
//          M_k = [I + B_k F_bar_k^{-1} / lambda_k]^{-1}
//
// The recursion is written once against the CurvatureModel concept. A dense
// model (small d, exact linear algebra) and a per-layer Kronecker model plug
// into the same code.

#pragma once

#include <concepts>
#include <optional>
#include <vector>

#include "kldwrm/curvature.hpp"
#include "kldwrm/tensor.hpp"

namespace kldwrm {

template <typename C>
concept CurvatureModel = requires(C& c, const Vector& v, double lambda) {
  { c.dim() } -> std::convertible_to<Index>;
  /// F_bar^{-1} v
  { c.solve_ea(v) } -> std::convertible_to<Vector>;
  /// [F_bar + B / lambda]^{-1} v
  { c.solve_regularized(v, lambda) } -> std::convertible_to<Vector>;
  /// M v with M = [I + B F_bar^{-1} / lambda]^{-1}
  { c.apply_contraction(v, lambda) } -> std::convertible_to<Vector>;
};

/// Exact dense curvature for small d. F_bar follows the exponential average
/// of the pushed F_i; B is the most recent model curvature.
class DenseCurvature {
 public:
  explicit DenseCurvature(double rho);

  /// Feeds F_k and, optionally, B_k. A missing B means B = 0.
  void push(const Matrix& F, const std::optional<Matrix>& B = std::nullopt);
  /// Sets F_bar and B directly.
  void set(const Matrix& F_bar, const std::optional<Matrix>& B = std::nullopt);

  Index dim() const { return F_bar_.rows(); }
  const Matrix& F_bar() const { return F_bar_; }
  bool has_model_curvature() const { return B_.has_value(); }

  Vector solve_ea(const Vector& v);
  Vector solve_regularized(const Vector& v, double lambda);
  Vector apply_contraction(const Vector& v, double lambda);
  /// M as a dense matrix; the identity when B = 0.
  Matrix contraction_matrix(double lambda);

 private:
  void factor_regularized(double lambda);

  double rho_;
  Index pushes_ = 0;
  Matrix F_bar_;
  std::optional<Matrix> B_;
  std::optional<Eigen::LLT<Matrix>> ea_llt_;
  std::optional<Eigen::LLT<Matrix>> reg_llt_;
  double reg_lambda_ = 0.0;
};

/// Per-layer reweighted factors for F_bar_k + B_k / lambda with B_k the
/// fresh Kronecker block, plus their damped inverses.
struct HatFactors {
  std::vector<Matrix> A_hat;
  std::vector<Matrix> G_hat;
  std::vector<Matrix> A_hat_inv;  // (A_hat + gamma I)^{-1}
  std::vector<Matrix> G_hat_inv;  // (G_hat + gamma I)^{-1}
  double lambda = 0.0;
};

/// A_hat = rho A_bar_{k-1} + ((1 - rho) lambda + 1) / lambda * A_k, and the same
/// for G. When `ea_prev` has seen no updates (k = 0), A_hat = (1 + 1/lambda) A_0.
HatFactors build_hat_factors(const EAState& ea_prev, const KronFactors& fresh, double lambda,
                             double gamma);

/// Per layer vec(G_bar (G_hat + gamma)^{-1} V (A_hat + gamma)^{-1} A_bar).
Vector hatM_apply(const EAState& ea, const HatFactors& hat, const Vector& v);

/// Kronecker-factored curvature used in training. F_bar is the block-diagonal
/// Kronecker EA; B is the block of the most recent factors.
class KroneckerCurvature {
 public:
  KroneckerCurvature(const Network& net, double rho, double gamma);

  /// Folds freshly computed factors into the EA and invalidates the caches.
  void refresh(const KronFactors& fresh);
  /// Treat B as zero (M = I and the regularized solve equals the EA solve).
  void set_zero_model_curvature(bool zero) { zero_model_ = zero; }

  Index dim() const { return offsets_.back(); }
  bool has_model_curvature() const { return !zero_model_; }
  const EAState& ea() const { return ea_; }
  const KronFactors& fresh() const { return fresh_; }
  const std::vector<Index>& offsets() const { return offsets_; }

  Vector solve_ea(const Vector& v);
  Vector solve_regularized(const Vector& v, double lambda);
  Vector apply_contraction(const Vector& v, double lambda);
  /// B v with B the undamped fresh Kronecker block.
  Vector apply_model_curvature(const Vector& v) const;

 private:
  const HatFactors& hat(double lambda);

  Network net_;
  std::vector<Index> offsets_;
  EAState ea_;
  EAState ea_prev_;
  KronFactors fresh_;
  std::optional<HatFactors> hat_;
  bool zero_model_ = false;
};

static_assert(CurvatureModel<DenseCurvature>);
static_assert(CurvatureModel<KroneckerCurvature>);

struct StepState {
  Vector g_hat;    // g_hat_k after the last step
  Vector prev_g;   // g_{k-1}; zero before the first step
  Vector prev_Mg;  // M_{k-1} g_hat_{k-1}
  double prev_lambda = 0.0;
  double rho = 0.0;
  Index k = 0;     // index of the next step

  StepState() = default;
  StepState(Index d, double rho);
};

/// -(1/lambda) v, the scaling shared by every engine.
inline Vector scale_step(const Vector& v, double lambda) { return v * (-1.0 / lambda); }

template <CurvatureModel C>
Vector woqm_step(C& curv, const Vector& g, double lambda) {
  if (g.size() != curv.dim()) throw DimensionError("woqm_step: gradient length mismatch");
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  return scale_step(curv.solve_ea(g), lambda);
}

template <CurvatureModel C>
Vector so_step(C& curv, const Vector& g, StepState& state, double lambda) {
  if (state.prev_g.size() != g.size()) throw DimensionError("so_step: state length mismatch");
  const Vector modified = g - state.rho * state.prev_g;
  Vector s = woqm_step(curv, modified, lambda);
  state.prev_g = g;
  state.prev_lambda = lambda;
  ++state.k;
  return s;
}

namespace detail {
void check_g_hat(const Vector& g_hat, const Vector& g, Index k);
}  // namespace detail

/// One Q step at iterate k with regularization lambda_k. The state must hold
/// the values written by the previous call.
template <CurvatureModel C>
Vector q_step_variable_lambda(C& curv, const Vector& g, StepState& state, double lambda_k) {
  if (g.size() != curv.dim() || state.prev_g.size() != g.size()) {
    throw DimensionError("q_step: gradient length mismatch");
  }
  if (!(lambda_k > 0.0)) throw ConfigError("lambda must be positive");
  if (state.k == 0) {
    state.g_hat = g;
  } else {
    const double c = (lambda_k / state.prev_lambda) * state.rho;
    state.g_hat = g + c * (state.g_hat - state.prev_Mg) - c * state.prev_g;
    detail::check_g_hat(state.g_hat, g, state.k);
  }
  Vector s = scale_step(curv.solve_regularized(state.g_hat, lambda_k), lambda_k);
  state.prev_Mg = curv.apply_contraction(state.g_hat, lambda_k);
  state.prev_g = g;
  state.prev_lambda = lambda_k;
  ++state.k;
  return s;
}

template <CurvatureModel C>
Vector q_step(C& curv, const Vector& g, StepState& state, double lambda) {
  return q_step_variable_lambda(curv, g, state, lambda);
}

/// Largest singular value by power iteration on N^T N.
double spectral_norm(const Matrix& n, int max_iter = 20000, double tol = 1e-15);

/// rho * ||I - M||_2, the contraction margin of the g_hat recursion.
double boundedness_margin(double rho, const Matrix& M);

enum class ClipMode { kNone, kGlobal, kPerGroup };

struct ClipPolicy {
  ClipMode mode = ClipMode::kNone;
  double clip_param = 0.1;  // global: ||s||_2 <= clip_param
  double tau = 2.0;         // per group: ||s_G||_2 / sqrt(|G|) <= tau
};

/// Rescales s per policy. `group_offsets` are increasing group boundaries
/// starting at 0 and ending at s.size().
Vector clip_step(const Vector& s, const ClipPolicy& policy,
                 const std::vector<Index>& group_offsets);

}  // namespace kldwrm
