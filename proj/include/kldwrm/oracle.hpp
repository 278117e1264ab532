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

// Dense reference solutions of the wake objectives, built term by term from a
// complete step history and solved with a symmetric linear solve. Independent
// of the recursion engines by construction: nothing here reuses steps.hpp.
//
// With S_i = sum_{j=i}^{k-1} s_j and kappa(0) = 1, kappa(i > 0) = 1 - rho:
//
//   woqm  min_s s^T sum_i rho^(k-i) (g_i + lambda kappa(i) B_i S_i)
//               + (lambda/2) s^T [sum_i kappa(i) rho^(k-i) B_i] s
//   so    min_s s^T [g_k + sum_{i<k} rho^(k-i) lambda kappa(i) F_i S_i]
//               + (lambda/2) s^T [sum_i kappa(i) rho^(k-i) F_i] s
//   q     as so, with quadratic matrix sum_i kappa(i) rho^(k-i) F_i + B_k / lambda
//
// The variable-lambda q objective uses lambda^(k) in every lambda slot.

#pragma once

#include <functional>
#include <vector>

#include "kldwrm/tensor.hpp"

namespace kldwrm::oracle {

inline constexpr Index kDefaultCap = 64;

struct WakeHistory {
  double rho = 0.0;
  double lambda = 1.0;
  std::vector<Vector> g;
  std::vector<Matrix> B;  // model curvature per step; empty means B = 0 (q)
  std::vector<Matrix> F;  // Fisher per step (so, q)
  std::vector<Vector> s;  // steps recorded by the solvers, in order
  Index cap = kDefaultCap;

  Index dim() const;
};

double kappa(Index i, double rho);

/// Each solver requires s_0 .. s_{k-1} to be recorded, returns s_k and records
/// it as h.s[k] (dropping any later entries).
Vector solve_woqm_dense(WakeHistory& h, Index k);
Vector solve_so_dense(WakeHistory& h, Index k);
Vector solve_q_dense(WakeHistory& h, Index k);
Vector solve_q_dense_varlambda(WakeHistory& h, const std::function<double(Index)>& lambda_sched,
                               Index k);

/// Value and gradient of the woqm objective at s.
double woqm_objective(const WakeHistory& h, Index k, const Vector& s);
Vector woqm_objective_grad(const WakeHistory& h, Index k, const Vector& s);

/// Gradient of [sum_i rho^(k-i) g_i]^T s + lambda sum_i kappa(i) rho^(k-i) D_i(s),
/// D_i(s) = 1/2 (s + S_i)^T F_i (s + S_i).
Vector kld_form_grad(const WakeHistory& h, Index k, const Vector& s);

}  // namespace kldwrm::oracle
