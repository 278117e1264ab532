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

#include "kldwrm/steps.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace kldwrm {

namespace {

Vector per_layer(const std::vector<Index>& offsets, const std::vector<Matrix>& A,
                 const std::vector<Matrix>& G, const Vector& v,
                 const auto& fn) {
  if (v.size() != offsets.back()) throw DimensionError("per-layer apply: vector length mismatch");
  Vector out(v.size());
  for (std::size_t l = 0; l + 1 < offsets.size(); ++l) {
    const Index n = offsets[l + 1] - offsets[l];
    const Index rows = G[l].rows();
    const Index cols = A[l].rows();
    if (rows * cols != n) throw DimensionError("per-layer apply: factor shapes do not match layout");
    Eigen::Map<const Matrix> V(v.data() + offsets[l], rows, cols);
    Matrix r = fn(l, V);
    out.segment(offsets[l], n) = Eigen::Map<const Vector>(r.data(), n);
  }
  return out;
}

std::vector<Index> offsets_from(const std::vector<Matrix>& A, const std::vector<Matrix>& G) {
  std::vector<Index> off{0};
  for (std::size_t l = 0; l < A.size(); ++l) off.push_back(off.back() + A[l].rows() * G[l].rows());
  return off;
}

constexpr double kClipSlack = 1.0 + 4.0 * std::numeric_limits<double>::epsilon();

}  // namespace

// ---------------------------------------------------------------------------
// DenseCurvature

DenseCurvature::DenseCurvature(double rho) : rho_(rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
}

void DenseCurvature::push(const Matrix& F, const std::optional<Matrix>& B) {
  require_symmetric(F, "F");
  if (pushes_ == 0) {
    F_bar_ = F;
  } else {
    if (F.rows() != F_bar_.rows()) throw DimensionError("DenseCurvature: dimension mismatch");
    F_bar_ = rho_ * F_bar_ + (1.0 - rho_) * F;
  }
  ++pushes_;
  if (B) {
    require_symmetric(*B, "B");
    if (B->rows() != F.rows()) throw DimensionError("DenseCurvature: B dimension mismatch");
  }
  B_ = B;
  ea_llt_.reset();
  reg_llt_.reset();
}

void DenseCurvature::set(const Matrix& F_bar, const std::optional<Matrix>& B) {
  require_symmetric(F_bar, "F_bar");
  if (B && B->rows() != F_bar.rows()) throw DimensionError("DenseCurvature: B dimension mismatch");
  F_bar_ = F_bar;
  B_ = B;
  pushes_ = 1;
  ea_llt_.reset();
  reg_llt_.reset();
}

Vector DenseCurvature::solve_ea(const Vector& v) {
  if (pushes_ == 0) throw Error("DenseCurvature: no curvature pushed");
  if (!ea_llt_) {
    ea_llt_.emplace(F_bar_);
    if (ea_llt_->info() != Eigen::Success) {
      ea_llt_.reset();
      throw SingularityError("DenseCurvature: F_bar is not positive definite");
    }
  }
  return ea_llt_->solve(v);
}

void DenseCurvature::factor_regularized(double lambda) {
  if (reg_llt_ && reg_lambda_ == lambda) return;
  reg_llt_.emplace(Matrix(F_bar_ + *B_ / lambda));
  if (reg_llt_->info() != Eigen::Success) {
    reg_llt_.reset();
    throw SingularityError("DenseCurvature: F_bar + B/lambda is not positive definite");
  }
  reg_lambda_ = lambda;
}

Vector DenseCurvature::solve_regularized(const Vector& v, double lambda) {
  if (!B_) return solve_ea(v);
  factor_regularized(lambda);
  return reg_llt_->solve(v);
}

Vector DenseCurvature::apply_contraction(const Vector& v, double lambda) {
  if (!B_) return v;
  return F_bar_ * solve_regularized(v, lambda);
}

Matrix DenseCurvature::contraction_matrix(double lambda) {
  const Index d = dim();
  if (!B_) return Matrix::Identity(d, d);
  factor_regularized(lambda);
  return F_bar_ * reg_llt_->solve(Matrix::Identity(d, d));
}

// ---------------------------------------------------------------------------
// Kronecker hat factors

HatFactors build_hat_factors(const EAState& ea_prev, const KronFactors& fresh, double lambda,
                             double gamma) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  const bool first = ea_prev.updates() == 0;
  const double rho = ea_prev.rho();
  const double coef = first ? 1.0 + 1.0 / lambda : ((1.0 - rho) * lambda + 1.0) / lambda;
  if (!first && (ea_prev.factors().A.size() != fresh.A.size() ||
                 ea_prev.factors().G.size() != fresh.G.size())) {
    throw DimensionError("build_hat_factors: layer count mismatch");
  }
  HatFactors hat;
  hat.lambda = lambda;
  for (std::size_t l = 0; l < fresh.A.size(); ++l) {
    if (first) {
      hat.A_hat.push_back(coef * fresh.A[l]);
      hat.G_hat.push_back(coef * fresh.G[l]);
    } else {
      const Matrix& Ap = ea_prev.factors().A[l];
      const Matrix& Gp = ea_prev.factors().G[l];
      if (Ap.rows() != fresh.A[l].rows() || Gp.rows() != fresh.G[l].rows()) {
        throw DimensionError("build_hat_factors: shape mismatch at layer " + std::to_string(l));
      }
      hat.A_hat.push_back(rho * Ap + coef * fresh.A[l]);
      hat.G_hat.push_back(rho * Gp + coef * fresh.G[l]);
    }
    hat.A_hat_inv.push_back(damped_inverse(hat.A_hat.back(), gamma));
    hat.G_hat_inv.push_back(damped_inverse(hat.G_hat.back(), gamma));
  }
  return hat;
}

Vector hatM_apply(const EAState& ea, const HatFactors& hat, const Vector& v) {
  const KronFactors& bar = ea.factors();
  if (bar.A.size() != hat.A_hat.size()) throw DimensionError("hatM_apply: layer count mismatch");
  return per_layer(offsets_from(bar.A, bar.G), bar.A, bar.G, v,
                   [&](std::size_t l, const Eigen::Map<const Matrix>& V) -> Matrix {
                     return bar.G[l] * (hat.G_hat_inv[l] * V * hat.A_hat_inv[l]) * bar.A[l];
                   });
}

// ---------------------------------------------------------------------------
// KroneckerCurvature

KroneckerCurvature::KroneckerCurvature(const Network& net, double rho, double gamma)
    : net_(net), offsets_(layer_offsets(net)), ea_(rho, gamma), ea_prev_(rho, gamma) {}

void KroneckerCurvature::refresh(const KronFactors& fresh) {
  if (fresh.A.size() != net_.layers.size()) throw DimensionError("refresh: layer count mismatch");
  for (std::size_t l = 0; l < fresh.A.size(); ++l) {
    const LayerSpec& s = net_.layers[l];
    if (fresh.A[l].rows() != s.in_dim + 1 || fresh.G[l].rows() != s.out_dim) {
      throw DimensionError("refresh: factor shape mismatch at layer " + std::to_string(l));
    }
  }
  ea_prev_ = ea_;
  ea_.update(fresh);
  fresh_ = fresh;
  hat_.reset();
}

Vector KroneckerCurvature::solve_ea(const Vector& v) {
  if (ea_.updates() == 0) throw Error("KroneckerCurvature: no factors yet");
  ea_.ensure_inverses();
  const KronFactors& inv = ea_.inverses();
  return per_layer(offsets_, ea_.factors().A, ea_.factors().G, v,
                   [&](std::size_t l, const Eigen::Map<const Matrix>& V) -> Matrix {
                     return inv.G[l] * V * inv.A[l];
                   });
}

const HatFactors& KroneckerCurvature::hat(double lambda) {
  if (ea_.updates() == 0) throw Error("KroneckerCurvature: no factors yet");
  if (!hat_ || hat_->lambda != lambda) {
    hat_ = build_hat_factors(ea_prev_, fresh_, lambda, ea_.gamma());
  }
  return *hat_;
}

Vector KroneckerCurvature::solve_regularized(const Vector& v, double lambda) {
  if (zero_model_) return solve_ea(v);
  const HatFactors& h = hat(lambda);
  return per_layer(offsets_, ea_.factors().A, ea_.factors().G, v,
                   [&](std::size_t l, const Eigen::Map<const Matrix>& V) -> Matrix {
                     return h.G_hat_inv[l] * V * h.A_hat_inv[l];
                   });
}

Vector KroneckerCurvature::apply_contraction(const Vector& v, double lambda) {
  if (zero_model_) return v;
  return hatM_apply(ea_, hat(lambda), v);
}

Vector KroneckerCurvature::apply_model_curvature(const Vector& v) const {
  if (zero_model_) return Vector::Zero(v.size());
  if (ea_.updates() == 0) throw Error("KroneckerCurvature: no factors yet");
  return per_layer(offsets_, fresh_.A, fresh_.G, v,
                   [&](std::size_t l, const Eigen::Map<const Matrix>& V) -> Matrix {
                     return fresh_.G[l] * V * fresh_.A[l];
                   });
}

// ---------------------------------------------------------------------------
// Recursion state and diagnostics

StepState::StepState(Index d, double rho_in)
    : g_hat(Vector::Zero(d)), prev_g(Vector::Zero(d)), prev_Mg(Vector::Zero(d)), rho(rho_in) {
  if (!(rho_in >= 0.0 && rho_in < 1.0)) throw ConfigError("rho must lie in [0, 1)");
}

namespace detail {

void check_g_hat(const Vector& g_hat, const Vector& g, Index k) {
  const double ng = g.norm();
  const double nh = g_hat.norm();
  if (!std::isfinite(nh) || (ng > 0.0 && nh > 1e6 * ng)) {
    std::ostringstream os;
    os << "g_hat diverged at step " << k << ": ||g_hat|| = " << nh << ", ||g|| = " << ng;
    throw NumericError(os.str());
  }
}

}  // namespace detail

double spectral_norm(const Matrix& n, int max_iter, double tol) {
  if (n.size() == 0) return 0.0;
  Vector v(n.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 0.1 * static_cast<double>(i % 7);
  v.normalize();
  double sigma2 = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = n.transpose() * (n * v);
    const double next = w.norm();
    if (next == 0.0) return 0.0;
    v = w / next;
    if (std::abs(next - sigma2) <= tol * next) {
      sigma2 = next;
      break;
    }
    sigma2 = next;
  }
  return std::sqrt(sigma2);
}

double boundedness_margin(double rho, const Matrix& M) {
  if (M.rows() != M.cols()) throw DimensionError("boundedness_margin: M must be square");
  if (rho == 0.0) return 0.0;
  const Matrix n = Matrix::Identity(M.rows(), M.cols()) - M;
  return rho * spectral_norm(n);
}

Vector clip_step(const Vector& s, const ClipPolicy& policy,
                 const std::vector<Index>& group_offsets) {
  if (group_offsets.size() < 2 || group_offsets.front() != 0 || group_offsets.back() != s.size()) {
    throw DimensionError("clip_step: group map does not cover the step");
  }
  for (std::size_t i = 0; i + 1 < group_offsets.size(); ++i) {
    if (group_offsets[i + 1] <= group_offsets[i]) throw DimensionError("clip_step: empty group");
  }
  Vector out = s;
  switch (policy.mode) {
    case ClipMode::kNone:
      break;
    case ClipMode::kGlobal: {
      if (!(policy.clip_param > 0.0)) throw ConfigError("clip_param must be positive");
      const double n = s.norm();
      if (n > policy.clip_param * kClipSlack) out *= policy.clip_param / n;
      break;
    }
    case ClipMode::kPerGroup: {
      if (!(policy.tau > 0.0)) throw ConfigError("tau must be positive");
      for (std::size_t i = 0; i + 1 < group_offsets.size(); ++i) {
        const Index len = group_offsets[i + 1] - group_offsets[i];
        auto seg = out.segment(group_offsets[i], len);
        const double limit = policy.tau * std::sqrt(static_cast<double>(len));
        const double n = seg.norm();
        if (n > limit * kClipSlack) seg *= limit / n;
      }
      break;
    }
  }
  return out;
}

}  // namespace kldwrm
