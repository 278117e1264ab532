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

#include "kldwrm/oracle.hpp"

#include <cmath>
#include <string>

namespace kldwrm::oracle {

namespace {

void require_steps(const WakeHistory& h, Index k) {
  if (k < 0) throw DimensionError("oracle: negative step index");
  if (static_cast<Index>(h.s.size()) < k) {
    throw DimensionError("oracle: steps s_0..s_{k-1} must be recorded before solving step " +
                         std::to_string(k));
  }
  if (h.dim() > h.cap) throw SizeError("oracle: dimension exceeds the oracle cap");
}

void require_len(const std::vector<Matrix>& m, Index k, const char* what) {
  if (static_cast<Index>(m.size()) <= k) {
    throw DimensionError(std::string("oracle: history of ") + what + " too short");
  }
}

// sum_{j=i}^{k-1} s_j
Vector tail_sum(const WakeHistory& h, Index i, Index k) {
  Vector acc = Vector::Zero(h.dim());
  for (Index j = i; j < k; ++j) acc += h.s[static_cast<std::size_t>(j)];
  return acc;
}

double rho_pow(double rho, Index e) { return std::pow(rho, static_cast<double>(e)); }

Vector solve_spd(const Matrix& q, const Vector& c) {
  Eigen::LLT<Matrix> llt(q);
  if (llt.info() != Eigen::Success) throw NumericError("oracle: quadratic term is not SPD");
  return -llt.solve(c);
}

Vector record(WakeHistory& h, Index k, Vector s) {
  h.s.resize(static_cast<std::size_t>(k));
  h.s.push_back(s);
  return s;
}

// Linear coefficient shared by so and q: g_k + sum_{i<k} rho^(k-i) lam kappa(i) F_i S_i.
Vector wake_linear(const WakeHistory& h, Index k, double lam) {
  Vector c = h.g[static_cast<std::size_t>(k)];
  for (Index i = 0; i < k; ++i) {
    c += rho_pow(h.rho, k - i) * lam * kappa(i, h.rho) * (h.F[static_cast<std::size_t>(i)] *
                                                         tail_sum(h, i, k));
  }
  return c;
}

Matrix wake_quadratic(const std::vector<Matrix>& mats, Index k, double rho) {
  Matrix q = Matrix::Zero(mats[0].rows(), mats[0].cols());
  for (Index i = 0; i <= k; ++i) q += kappa(i, rho) * rho_pow(rho, k - i) * mats[static_cast<std::size_t>(i)];
  return q;
}

Vector q_solve(WakeHistory& h, Index k, double lam) {
  require_steps(h, k);
  require_len(h.F, k, "F");
  if (static_cast<Index>(h.g.size()) <= k) throw DimensionError("oracle: gradient history too short");
  const Vector c = wake_linear(h, k, lam);
  Matrix q = wake_quadratic(h.F, k, h.rho);
  if (!h.B.empty()) {
    require_len(h.B, k, "B");
    q += h.B[static_cast<std::size_t>(k)] / lam;
  }
  return record(h, k, solve_spd(lam * q, c));
}

}  // namespace

Index WakeHistory::dim() const {
  if (!g.empty()) return g.front().size();
  if (!F.empty()) return F.front().rows();
  if (!B.empty()) return B.front().rows();
  return 0;
}

double kappa(Index i, double rho) { return i == 0 ? 1.0 : 1.0 - rho; }

Vector woqm_objective_grad(const WakeHistory& h, Index k, const Vector& s) {
  require_steps(h, k);
  require_len(h.B, k, "B");
  Vector c = Vector::Zero(h.dim());
  for (Index i = 0; i <= k; ++i) {
    c += rho_pow(h.rho, k - i) * (h.g[static_cast<std::size_t>(i)] +
                                  h.lambda * kappa(i, h.rho) *
                                      (h.B[static_cast<std::size_t>(i)] * tail_sum(h, i, k)));
  }
  return c + h.lambda * (wake_quadratic(h.B, k, h.rho) * s);
}

double woqm_objective(const WakeHistory& h, Index k, const Vector& s) {
  require_steps(h, k);
  require_len(h.B, k, "B");
  Vector c = Vector::Zero(h.dim());
  for (Index i = 0; i <= k; ++i) {
    c += rho_pow(h.rho, k - i) * (h.g[static_cast<std::size_t>(i)] +
                                  h.lambda * kappa(i, h.rho) *
                                      (h.B[static_cast<std::size_t>(i)] * tail_sum(h, i, k)));
  }
  return s.dot(c) + 0.5 * h.lambda * s.dot(wake_quadratic(h.B, k, h.rho) * s);
}

Vector solve_woqm_dense(WakeHistory& h, Index k) {
  require_steps(h, k);
  require_len(h.B, k, "B");
  const Vector zero = Vector::Zero(h.dim());
  // The objective is quadratic, so its gradient at 0 is the linear term.
  const Vector c = woqm_objective_grad(h, k, zero);
  return record(h, k, solve_spd(h.lambda * wake_quadratic(h.B, k, h.rho), c));
}

Vector solve_so_dense(WakeHistory& h, Index k) {
  require_steps(h, k);
  require_len(h.F, k, "F");
  const Vector c = wake_linear(h, k, h.lambda);
  return record(h, k, solve_spd(h.lambda * wake_quadratic(h.F, k, h.rho), c));
}

Vector solve_q_dense(WakeHistory& h, Index k) { return q_solve(h, k, h.lambda); }

Vector solve_q_dense_varlambda(WakeHistory& h, const std::function<double(Index)>& lambda_sched,
                               Index k) {
  const double lam = lambda_sched(k);
  if (!(lam > 0.0)) throw ConfigError("oracle: lambda schedule must be positive");
  return q_solve(h, k, lam);
}

Vector kld_form_grad(const WakeHistory& h, Index k, const Vector& s) {
  require_steps(h, k);
  require_len(h.F, k, "F");
  Vector grad = Vector::Zero(h.dim());
  for (Index i = 0; i <= k; ++i) grad += rho_pow(h.rho, k - i) * h.g[static_cast<std::size_t>(i)];
  for (Index i = 0; i <= k; ++i) {
    const Vector offset = s + tail_sum(h, i, k);
    grad += h.lambda * kappa(i, h.rho) * rho_pow(h.rho, k - i) *
            (h.F[static_cast<std::size_t>(i)] * offset);
  }
  return grad;
}

}  // namespace kldwrm::oracle
