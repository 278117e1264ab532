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

// Exact symmetric KL wake terms and the inner first-order loop that refines a
// Q step against them.
//
// The inner objective at iterate theta_k (curvature epoch e) is
//
//   f(s) = g^T s + 1/2 s^T B s
//          + sum_{(theta_i, i) in ring + (theta_k, e)} w_i SKL_batch(theta_i, theta_k + s)
//   w_i  = lambda * kappa(i) * zeta_scale * rho^(e - i)
//
// where SKL_batch averages the per-sample symmetric KL over the minibatch.

#pragma once

#include <deque>
#include <functional>

#include "kldwrm/network.hpp"
#include "kldwrm/steps.hpp"

namespace kldwrm {

/// 1/2 ||h1 - h2||^2: SKL between N(h1, I) and N(h2, I).
double skl_gaussian(const Vector& h1, const Vector& h2);
/// 1/2 KL(p1 || p2) + 1/2 KL(p2 || p1) with p = softmax(logits).
double skl_categorical(const Vector& logits1, const Vector& logits2);

/// Batch mean of the per-sample SKL between the heads of two parameter sets.
double dataset_skl(const Network& net, const NetParams& a, const NetParams& b,
                   const Matrix& inputs);
/// Same, from precomputed outputs (columns are samples).
double outputs_skl(const Matrix& outputs_a, const Matrix& outputs_b, LossKind kind);
/// d/d(outputs_b) of the per-sample SKL, one column per sample (not averaged).
Matrix outputs_skl_grad(const Matrix& outputs_a, const Matrix& outputs_b, LossKind kind);

class SnapshotRing {
 public:
  struct Entry {
    NetParams params;
    Index birth = 0;
  };

  explicit SnapshotRing(Index cap);

  /// Appends a snapshot; evicts the oldest beyond the cap. Births must increase.
  void push(const NetParams& params, Index birth);
  const std::deque<Entry>& entries() const { return entries_; }
  Index cap() const { return cap_; }
  Index size() const { return static_cast<Index>(entries_.size()); }

 private:
  Index cap_;
  std::deque<Entry> entries_;
};

struct QEConfig {
  Index n_is = 10;
  double omega = 0.07;
  Index n_cap = 4;
  double zeta_scale = 1.0 / 330.0;

  void validate() const;
};

/// lambda * kappa(birth) * zeta_scale * rho^(current - birth).
double wake_weight(Index birth, Index current, double lambda, double rho, double zeta_scale);

/// Fixed data of one inner problem: the batch, the iterate, its gradient and
/// the snapshot outputs on the batch.
struct QEProblem {
  const Network* net = nullptr;
  NetParams theta;
  Matrix inputs;
  Vector g;
  std::function<Vector(const Vector&)> apply_B;  // v -> B v
  std::vector<Matrix> ref_outputs;               // one per wake term
  std::vector<double> weights;                   // matching wake weights
};

/// Builds the problem for iterate `theta` at curvature epoch `current`. The
/// live iterate contributes a term with birth `current`.
QEProblem make_qe_problem(const Network& net, const NetParams& theta, const Matrix& inputs,
                          const Vector& g, std::function<Vector(const Vector&)> apply_B,
                          const SnapshotRing& ring, Index current, double lambda, double rho,
                          const QEConfig& cfg);

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

ValueGrad qe_objective_grad(const QEProblem& problem, const Vector& s);

/// Q step followed by n_is gradient steps of size omega / lambda on the inner
/// objective. The recursion state advances exactly as q_step.
template <CurvatureModel C>
Vector qe_step(C& curv, const QEProblem& problem, StepState& state, double lambda,
               const QEConfig& cfg);

namespace detail {
Vector qe_refine(const QEProblem& problem, Vector s, double lambda, const QEConfig& cfg);
}  // namespace detail

template <CurvatureModel C>
Vector qe_step(C& curv, const QEProblem& problem, StepState& state, double lambda,
               const QEConfig& cfg) {
  cfg.validate();
  Vector s = q_step(curv, problem.g, state, lambda);
  if (cfg.n_is == 0) return s;
  return detail::qe_refine(problem, std::move(s), lambda, cfg);
}

}  // namespace kldwrm
