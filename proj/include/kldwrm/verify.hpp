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

// Randomized equivalence suites: recursion engines in dense mode against the
// dense wake-objective solutions, plus the g_hat boundedness experiment.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kldwrm/tensor.hpp"

namespace kldwrm::verify {

struct Report {
  std::string name;
  int instances = 0;
  double max_error = 0.0;  // maximum relative error across every compared step
  double seconds = 0.0;
  bool bit_identical = true;  // only meaningful where a suite checks it
  std::string detail;
};

struct Grid {
  std::vector<Index> dims{2, 4, 8};
  std::vector<double> rhos{0.0, 0.33, 0.5, 0.7, 0.95};
  std::vector<double> lambdas{1.0, 100.0};
  Index steps = 20;  // compare k = 0 .. steps
  int instances = 50;
  std::uint64_t seed = 1;
};

/// R R^T + 0.1 I with R standard normal.
Matrix random_spd(Index d, std::mt19937_64& rng);
Vector random_vector(Index d, std::mt19937_64& rng);

/// ||a - b|| / max(||b||, 1e-300).
double rel_error(const Vector& a, const Vector& b);

Report verify_woqm(const Grid& grid);
Report verify_so(const Grid& grid);
/// Also checks that q with B = 0 reproduces so bit for bit.
Report verify_q(const Grid& grid);
/// Decaying lambda_k = 100 / (1 + 0.1 k) on d = 6; `bit_identical` reports
/// whether a constant schedule reproduces q_step exactly.
Report verify_q_varlambda(int instances, Index steps, std::uint64_t seed);
/// kld_form_grad against the woqm objective gradient on d = 6, k = 8.
Report verify_kld_form(int instances, std::uint64_t seed);

struct BoundednessReport {
  int runs = 0;
  double max_margin = 0.0;  // largest rho ||I - M||_2 seen
  double max_ratio = 0.0;   // largest ||g_hat|| / (2 K_g / (1 - delta))
  double max_excess = 0.0;  // largest ||g_hat|| - 2 K_g / (1 - delta)
  double max_margin_eig_gap = 0.0;  // power iteration vs eigendecomposition
};

/// `runs` runs of `steps` steps with commuting SPD F_bar, B drawn per step so
/// that rho ||I - M||_2 <= delta, and gradients with ||g|| <= k_g.
BoundednessReport verify_boundedness(int runs, Index steps, double rho, double delta, double k_g,
                                     std::uint64_t seed);

std::string format_report(const Report& r);

}  // namespace kldwrm::verify
