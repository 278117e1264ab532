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

#include "kldwrm/verify.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "kldwrm/oracle.hpp"
#include "kldwrm/steps.hpp"

namespace kldwrm::verify {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Report start(const std::string& name, int instances) {
  Report r;
  r.name = name;
  r.instances = instances;
  return r;
}

struct Instance {
  Index d;
  double rho;
  double lambda;
};

Instance pick(const Grid& g, int n) {
  const std::size_t nd = g.dims.size(), nr = g.rhos.size(), nl = g.lambdas.size();
  const auto u = static_cast<std::size_t>(n);
  return {g.dims[u % nd], g.rhos[(u / nd) % nr], g.lambdas[(u / (nd * nr)) % nl]};
}

// Orthogonal matrix from the QR factorization of a Gaussian matrix.
Matrix random_orthogonal(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix r(d, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) r(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Matrix> qr(r);
  return qr.householderQ() * Matrix::Identity(d, d);
}

}  // namespace

Matrix random_spd(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix r(d, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) r(i, j) = normal(rng);
  }
  Matrix m = r * r.transpose() + 0.1 * Matrix::Identity(d, d);
  return (m + m.transpose()) / 2.0;
}

Vector random_vector(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v(i) = normal(rng);
  return v;
}

double rel_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

Report verify_woqm(const Grid& grid) {
  const auto t0 = Clock::now();
  Report rep = start("woqm vs wake objective", grid.instances);
  std::mt19937_64 rng(grid.seed);
  for (int n = 0; n < grid.instances; ++n) {
    const Instance in = pick(grid, n);
    oracle::WakeHistory h;
    h.rho = in.rho;
    h.lambda = in.lambda;
    DenseCurvature curv(in.rho);
    for (Index k = 0; k <= grid.steps; ++k) {
      h.g.push_back(random_vector(in.d, rng));
      h.B.push_back(random_spd(in.d, rng));
      curv.push(h.B.back());
      const Vector s = woqm_step(curv, h.g.back(), in.lambda);
      rep.max_error = std::max(rep.max_error, rel_error(s, oracle::solve_woqm_dense(h, k)));
    }
  }
  rep.seconds = since(t0);
  return rep;
}

Report verify_so(const Grid& grid) {
  const auto t0 = Clock::now();
  Report rep = start("so vs wake objective", grid.instances);
  std::mt19937_64 rng(grid.seed + 1);
  for (int n = 0; n < grid.instances; ++n) {
    const Instance in = pick(grid, n);
    oracle::WakeHistory h;
    h.rho = in.rho;
    h.lambda = in.lambda;
    DenseCurvature curv(in.rho);
    StepState state(in.d, in.rho);
    for (Index k = 0; k <= grid.steps; ++k) {
      h.g.push_back(random_vector(in.d, rng));
      h.F.push_back(random_spd(in.d, rng));
      curv.push(h.F.back());
      const Vector s = so_step(curv, h.g.back(), state, in.lambda);
      rep.max_error = std::max(rep.max_error, rel_error(s, oracle::solve_so_dense(h, k)));
    }
  }
  rep.seconds = since(t0);
  return rep;
}

Report verify_q(const Grid& grid) {
  const auto t0 = Clock::now();
  Report rep = start("q vs wake objective", grid.instances);
  std::mt19937_64 rng(grid.seed + 2);
  for (int n = 0; n < grid.instances; ++n) {
    const Instance in = pick(grid, n);
    oracle::WakeHistory h;
    h.rho = in.rho;
    h.lambda = in.lambda;
    DenseCurvature curv(in.rho);
    DenseCurvature curv_b0(in.rho);
    DenseCurvature curv_so(in.rho);
    StepState state(in.d, in.rho);
    StepState state_b0(in.d, in.rho);
    StepState state_so(in.d, in.rho);
    for (Index k = 0; k <= grid.steps; ++k) {
      h.g.push_back(random_vector(in.d, rng));
      h.F.push_back(random_spd(in.d, rng));
      h.B.push_back(random_spd(in.d, rng));
      curv.push(h.F.back(), h.B.back());
      curv_b0.push(h.F.back());
      curv_so.push(h.F.back());
      const Vector s = q_step(curv, h.g.back(), state, in.lambda);
      rep.max_error = std::max(rep.max_error, rel_error(s, oracle::solve_q_dense(h, k)));
      const Vector s_b0 = q_step(curv_b0, h.g.back(), state_b0, in.lambda);
      const Vector s_so = so_step(curv_so, h.g.back(), state_so, in.lambda);
      if (!(s_b0.array() == s_so.array()).all()) rep.bit_identical = false;
    }
  }
  rep.seconds = since(t0);
  return rep;
}

Report verify_q_varlambda(int instances, Index steps, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Report rep = start("variable-lambda q vs wake objective", instances);
  std::mt19937_64 rng(seed);
  const std::vector<double> rhos{0.0, 0.33, 0.5, 0.7, 0.95};
  const auto sched = [](Index k) { return 100.0 / (1.0 + 0.1 * static_cast<double>(k)); };
  constexpr Index d = 6;
  for (int n = 0; n < instances; ++n) {
    const double rho = rhos[static_cast<std::size_t>(n) % rhos.size()];
    oracle::WakeHistory h;
    h.rho = rho;
    DenseCurvature curv(rho);
    DenseCurvature curv_c1(rho);
    DenseCurvature curv_c2(rho);
    StepState state(d, rho);
    StepState state_c1(d, rho);
    StepState state_c2(d, rho);
    for (Index k = 0; k <= steps; ++k) {
      h.g.push_back(random_vector(d, rng));
      h.F.push_back(random_spd(d, rng));
      h.B.push_back(random_spd(d, rng));
      curv.push(h.F.back(), h.B.back());
      curv_c1.push(h.F.back(), h.B.back());
      curv_c2.push(h.F.back(), h.B.back());
      const Vector s = q_step_variable_lambda(curv, h.g.back(), state, sched(k));
      rep.max_error =
          std::max(rep.max_error, rel_error(s, oracle::solve_q_dense_varlambda(h, sched, k)));
      const Vector a = q_step_variable_lambda(curv_c1, h.g.back(), state_c1, 100.0);
      const Vector b = q_step(curv_c2, h.g.back(), state_c2, 100.0);
      if (!(a.array() == b.array()).all()) rep.bit_identical = false;
    }
  }
  rep.seconds = since(t0);
  return rep;
}

Report verify_kld_form(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Report rep = start("kl-wake gradient vs woqm gradient", instances);
  std::mt19937_64 rng(seed);
  constexpr Index d = 6;
  constexpr Index k = 8;
  const std::vector<double> rhos{0.0, 0.33, 0.5, 0.95};
  const std::vector<double> lambdas{1.0, 100.0};
  for (int n = 0; n < instances; ++n) {
    oracle::WakeHistory h;
    h.rho = rhos[static_cast<std::size_t>(n) % rhos.size()];
    h.lambda = lambdas[static_cast<std::size_t>(n / 4) % lambdas.size()];
    for (Index i = 0; i <= k; ++i) {
      h.g.push_back(random_vector(d, rng));
      h.F.push_back(random_spd(d, rng));
      h.B.push_back(h.F.back());
      if (i < k) oracle::solve_woqm_dense(h, i);
    }
    const Vector s = random_vector(d, rng);
    const Vector a = oracle::kld_form_grad(h, k, s);
    const Vector b = oracle::woqm_objective_grad(h, k, s);
    rep.max_error = std::max(rep.max_error, rel_error(a, b));
  }
  rep.seconds = since(t0);
  return rep;
}

BoundednessReport verify_boundedness(int runs, Index steps, double rho, double delta, double k_g,
                                     std::uint64_t seed) {
  BoundednessReport rep;
  rep.runs = runs;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> eig(0.1, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr Index d = 6;
  constexpr double lambda = 1.0;
  const double bound = 2.0 * k_g / (1.0 - delta);
  for (int r = 0; r < runs; ++r) {
    const Matrix q = random_orthogonal(d, rng);
    DenseCurvature curv(rho);
    StepState state(d, rho);
    for (Index k = 0; k < steps; ++k) {
      Vector f(d), b(d);
      for (Index i = 0; i < d; ++i) {
        f(i) = eig(rng);
        b(i) = eig(rng);
      }
      const Matrix F_bar = q * f.asDiagonal() * q.transpose();
      const Matrix B = q * b.asDiagonal() * q.transpose();
      curv.set((F_bar + F_bar.transpose()) / 2.0, Matrix((B + B.transpose()) / 2.0));
      Vector g = random_vector(d, rng);
      g *= k_g * unit(rng) / g.norm();
      q_step(curv, g, state, lambda);
      rep.max_ratio = std::max(rep.max_ratio, state.g_hat.norm() / bound);
      rep.max_excess = std::max(rep.max_excess, state.g_hat.norm() - bound);
      const Matrix M = curv.contraction_matrix(lambda);
      const Matrix n = Matrix::Identity(d, d) - M;
      const double exact =
          rho * std::sqrt(std::max(0.0, sym_eig(Matrix(n.transpose() * n)).values(0)));
      rep.max_margin = std::max(rep.max_margin, exact);
      if (k % 50 == 0) {
        rep.max_margin_eig_gap =
            std::max(rep.max_margin_eig_gap, std::abs(boundedness_margin(rho, M) - exact));
      }
    }
  }
  return rep;
}

std::string format_report(const Report& r) {
  std::ostringstream os;
  os << r.name << ": " << r.instances << " instances, max relative error " << r.max_error
     << ", " << r.seconds << " s";
  if (!r.detail.empty()) os << ", " << r.detail;
  return os.str();
}

}  // namespace kldwrm::verify
