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

// Kronecker-factored curvature: per-layer factors, their exponential
// averages, damped inverse caches and the refresh schedule.

#pragma once

#include <vector>

#include "kldwrm/network.hpp"
#include "kldwrm/tensor.hpp"

namespace kldwrm {

struct KronFactors {
  std::vector<Matrix> A;  // A[l]: (in_l + 1)^2, second moment of augmented inputs
  std::vector<Matrix> G;  // G[l]: out_l^2, second moment of dL/dz
  std::size_t num_layers() const { return A.size(); }
};

/// Exponential-average weight kappa(i) rho^(k - i): kappa(0) = 1, else 1 - rho.
inline double ea_weight(Index i, Index k, double rho) {
  const double kappa = i == 0 ? 1.0 : 1.0 - rho;
  return kappa * std::pow(rho, static_cast<double>(k - i));
}

/// Batch means of a_aug a_aug^T and dz dz^T. `dz` holds per-sample loss
/// derivatives (not divided by the batch size) from model-sampled labels.
KronFactors compute_factors(const ForwardCache& cache, const std::vector<Matrix>& dz);

/// Samples labels from the model at `cache.outputs`, backpropagates them and
/// returns the factors of that batch.
KronFactors sampled_factors(const Network& net, const NetParams& params,
                            const ForwardCache& cache, std::mt19937_64& rng);

class EAState {
 public:
  EAState() = default;
  EAState(double rho, double gamma);

  /// First call stores the factors with weight 1; later calls apply
  /// X <- rho X + (1 - rho) X_fresh. Invalidates the inverse caches.
  void update(const KronFactors& fresh);

  /// Recomputes (X + gamma I)^{-1} for every factor if the cache is stale.
  void ensure_inverses();
  bool inverses_current() const { return inverses_current_; }

  const KronFactors& factors() const { return bar_; }
  /// Throws Error when the caches are stale.
  const KronFactors& inverses() const;

  double rho() const { return rho_; }
  double gamma() const { return gamma_; }
  /// Number of updates applied so far.
  Index updates() const { return updates_; }

 private:
  double rho_ = 0.0;
  double gamma_ = 0.0;
  Index updates_ = 0;
  KronFactors bar_;
  KronFactors inv_;
  bool inverses_current_ = false;
};

EAState ea_update(EAState state, const KronFactors& fresh);

/// True iff k mod n_u == 0; n_u == 0 is a configuration error.
bool should_refresh(Index k, Index n_u);

/// rho^k F_0 + (1 - rho) sum_{i >= 1} rho^(k - i) F_i for k = history.size() - 1.
Matrix ea_dense_fisher(const std::vector<Matrix>& history, double rho);

/// Block-diagonal matrix with blocks A_l (x) G_l, in flattened parameter order.
Matrix kron_block_diag(const KronFactors& f, Index cap = kDenseKronCap);

}  // namespace kldwrm
