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

#include "kldwrm/curvature.hpp"

#include <string>

namespace kldwrm {

KronFactors compute_factors(const ForwardCache& cache, const std::vector<Matrix>& dz) {
  if (dz.size() != cache.a_aug.size()) throw DimensionError("compute_factors: layer count mismatch");
  const Index B = cache.batch_size();
  if (B == 0) throw DimensionError("compute_factors: empty batch");
  KronFactors f;
  for (std::size_t l = 0; l < dz.size(); ++l) {
    if (dz[l].cols() != B || cache.a_aug[l].cols() != B || dz[l].rows() != cache.z[l].rows()) {
      throw DimensionError("compute_factors: cache mismatch at layer " + std::to_string(l));
    }
    Matrix a(cache.a_aug[l].rows(), cache.a_aug[l].rows());
    a.setZero();
    a.selfadjointView<Eigen::Lower>().rankUpdate(cache.a_aug[l], 1.0 / static_cast<double>(B));
    a = a.selfadjointView<Eigen::Lower>();
    Matrix g(dz[l].rows(), dz[l].rows());
    g.setZero();
    g.selfadjointView<Eigen::Lower>().rankUpdate(dz[l], 1.0 / static_cast<double>(B));
    g = g.selfadjointView<Eigen::Lower>();
    f.A.push_back(std::move(a));
    f.G.push_back(std::move(g));
  }
  return f;
}

KronFactors sampled_factors(const Network& net, const NetParams& params,
                            const ForwardCache& cache, std::mt19937_64& rng) {
  const Targets sampled = sample_labels_from_outputs(cache.outputs, net.loss_kind(), rng);
  const Matrix r = output_residual(cache.outputs, sampled, net.loss_kind());
  return compute_factors(cache, backward_dz(net, params, cache, r));
}

EAState::EAState(double rho, double gamma) : rho_(rho), gamma_(gamma) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(gamma >= 0.0)) throw ConfigError("damping must be nonnegative");
}

void EAState::update(const KronFactors& fresh) {
  if (updates_ == 0) {
    bar_ = fresh;
  } else {
    if (fresh.A.size() != bar_.A.size() || fresh.G.size() != bar_.G.size()) {
      throw DimensionError("ea_update: layer count mismatch");
    }
    for (std::size_t l = 0; l < bar_.A.size(); ++l) {
      if (fresh.A[l].rows() != bar_.A[l].rows() || fresh.G[l].rows() != bar_.G[l].rows()) {
        throw DimensionError("ea_update: factor shape mismatch at layer " + std::to_string(l));
      }
      bar_.A[l] = rho_ * bar_.A[l] + (1.0 - rho_) * fresh.A[l];
      bar_.G[l] = rho_ * bar_.G[l] + (1.0 - rho_) * fresh.G[l];
    }
  }
  ++updates_;
  inverses_current_ = false;
}

void EAState::ensure_inverses() {
  if (inverses_current_) return;
  inv_.A.clear();
  inv_.G.clear();
  for (std::size_t l = 0; l < bar_.A.size(); ++l) {
    inv_.A.push_back(damped_inverse(bar_.A[l], gamma_));
    inv_.G.push_back(damped_inverse(bar_.G[l], gamma_));
  }
  inverses_current_ = true;
}

const KronFactors& EAState::inverses() const {
  if (!inverses_current_) throw Error("EAState: inverse cache is stale");
  return inv_;
}

EAState ea_update(EAState state, const KronFactors& fresh) {
  state.update(fresh);
  return state;
}

bool should_refresh(Index k, Index n_u) {
  if (n_u <= 0) throw ConfigError("update period must be positive");
  return k % n_u == 0;
}

Matrix ea_dense_fisher(const std::vector<Matrix>& history, double rho) {
  if (history.empty()) throw DimensionError("ea_dense_fisher: empty history");
  const Index k = static_cast<Index>(history.size()) - 1;
  Matrix out = Matrix::Zero(history[0].rows(), history[0].cols());
  for (Index i = 0; i <= k; ++i) {
    const Matrix& f = history[static_cast<std::size_t>(i)];
    if (f.rows() != out.rows() || f.cols() != out.cols()) {
      throw DimensionError("ea_dense_fisher: dimension mismatch at index " + std::to_string(i));
    }
    out += ea_weight(i, k, rho) * f;
  }
  return out;
}

Matrix kron_block_diag(const KronFactors& f, Index cap) {
  Index d = 0;
  for (std::size_t l = 0; l < f.A.size(); ++l) d += f.A[l].rows() * f.G[l].rows();
  if (d > cap) throw SizeError("kron_block_diag: dimension " + std::to_string(d) + " exceeds cap");
  Matrix out = Matrix::Zero(d, d);
  Index o = 0;
  for (std::size_t l = 0; l < f.A.size(); ++l) {
    const Index n = f.A[l].rows() * f.G[l].rows();
    out.block(o, o, n, n) = dense_kron(f.A[l], f.G[l], cap);
    o += n;
  }
  return out;
}

}  // namespace kldwrm
