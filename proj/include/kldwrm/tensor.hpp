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

// Dense linear-algebra kernels shared by every other module: symmetric
// eigendecomposition by cyclic Jacobi, damped inversion of PSD factors and
// Kronecker-product utilities.
//
// Vec convention: column stacking. For V with n rows and m columns,
// vec(V) stacks the columns of V, and
//
//   (A (x) G) vec(V) = vec(G V A^T),   A: m x m,  G: n x n.
//
// Eigen's default column-major storage makes vec/unvec a reinterpretation of
// the same buffer.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Jacobi>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kldwrm/errors.hpp"

namespace kldwrm {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

/// Default cap on either dimension of a dense Kronecker materialization.
inline constexpr Index kDenseKronCap = 4096;

/// Largest dimension routed to cyclic Jacobi under EigMethod::kAuto.
inline constexpr Index kJacobiMaxDim = 256;

enum class EigMethod {
  kAuto,         // Jacobi up to kJacobiMaxDim, tridiagonal QR above
  kJacobi,       // cyclic two-sided Jacobi
  kTridiagonal,  // Householder tridiagonalization + implicit QR (Eigen)
};

template <typename Scalar>
struct SymEig {
  VectorX<Scalar> values;   // descending
  MatrixX<Scalar> vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

namespace detail {

inline std::string shape_string(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

}  // namespace detail

/// Largest absolute entry; 0 for empty matrices.
template <typename Derived>
typename Derived::Scalar max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? typename Derived::Scalar(0) : m.cwiseAbs().maxCoeff();
}

/// Throws unless `m` is square and symmetric to 1e-10 * (1 + max|m|).
template <typename Derived>
void require_symmetric(const Eigen::MatrixBase<Derived>& m, const char* what = "matrix") {
  using Scalar = typename Derived::Scalar;
  if (m.rows() != m.cols()) {
    throw DimensionError(std::string(what) + " must be square, got " +
                         detail::shape_string(m.rows(), m.cols()));
  }
  const Scalar asym = max_abs(m - m.transpose());
  const Scalar tol = Scalar(1e-10) * (Scalar(1) + max_abs(m));
  if (!(asym <= tol)) {
    std::ostringstream os;
    os << what << " is not symmetric: max |M - M^T| = " << asym << " > " << tol;
    throw SymmetryError(os.str());
  }
}

namespace detail {

template <typename Scalar>
SymEig<Scalar> sorted_descending(const VectorX<Scalar>& diag, const MatrixX<Scalar>& v) {
  const Index n = diag.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return diag(x) > diag(y); });
  SymEig<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    out.values(i) = diag(src);
    out.vectors.col(i) = v.col(src);
  }
  return out;
}

// Cyclic Jacobi on an already symmetrized matrix. Sweeps visit every (p, q)
// above the diagonal and annihilate a_pq unless it is negligible next to the
// diagonal pair; iteration stops after a sweep without rotations.
template <typename Scalar>
SymEig<Scalar> jacobi_eig(MatrixX<Scalar> a) {
  const Index n = a.rows();
  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);

  const Scalar precision = Scalar(2) * std::numeric_limits<Scalar>::epsilon();
  const Scalar tiny = std::numeric_limits<Scalar>::min();
  constexpr int kMaxSweeps = 100;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Index q = 1; q < n; ++q) {
      for (Index p = 0; p < q; ++p) {
        const Scalar apq = a(p, q);
        const Scalar threshold =
            std::max(tiny, precision * std::max(std::abs(a(p, p)), std::abs(a(q, q))));
        if (std::abs(apq) <= threshold) continue;
        rotated = true;
        Eigen::JacobiRotation<Scalar> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheRight(p, q, rot);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
        v.applyOnTheRight(p, q, rot);
      }
    }
    if (!rotated) break;
  }

  return sorted_descending<Scalar>(a.diagonal(), v);
}

}  // namespace detail

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
///
/// The input is checked for symmetry and then symmetrized as (M + M^T)/2.
template <typename Derived>
SymEig<typename Derived::Scalar> sym_eig(const Eigen::MatrixBase<Derived>& m,
                                         EigMethod method = EigMethod::kAuto) {
  using Scalar = typename Derived::Scalar;
  require_symmetric(m, "sym_eig input");
  MatrixX<Scalar> a = (m + m.transpose()) / Scalar(2);
  if (method == EigMethod::kAuto) {
    method = a.rows() <= kJacobiMaxDim ? EigMethod::kJacobi : EigMethod::kTridiagonal;
  }
  if (method == EigMethod::kJacobi) return detail::jacobi_eig<Scalar>(std::move(a));

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(a);
  if (solver.info() != Eigen::Success) {
    throw NumericError("sym_eig: tridiagonal QR did not converge");
  }
  return detail::sorted_descending<Scalar>(solver.eigenvalues(), solver.eigenvectors());
}

/// Q diag(1 / (lambda_i + gamma)) Q^T from a precomputed decomposition.
template <typename Scalar>
MatrixX<Scalar> inverse_from_eig(const SymEig<Scalar>& eig, Scalar gamma) {
  if (gamma < Scalar(0)) throw ConfigError("damping must be nonnegative");
  const Index n = eig.values.size();
  VectorX<Scalar> shifted = eig.values.array() + gamma;
  if (n > 0 && !(shifted.minCoeff() > Scalar(1e-12))) {
    std::ostringstream os;
    os << "damped inverse of a numerically singular matrix: min eigenvalue + gamma = "
       << shifted.minCoeff();
    throw SingularityError(os.str());
  }
  MatrixX<Scalar> scaled = eig.vectors * shifted.cwiseInverse().asDiagonal();
  MatrixX<Scalar> inv = scaled * eig.vectors.transpose();
  return (inv + inv.transpose()) / Scalar(2);
}

/// (M + gamma I)^{-1} for symmetric PSD M, via its eigendecomposition.
template <typename Derived>
MatrixX<typename Derived::Scalar> damped_inverse(const Eigen::MatrixBase<Derived>& m,
                                                 typename Derived::Scalar gamma,
                                                 EigMethod method = EigMethod::kAuto) {
  return inverse_from_eig(sym_eig(m, method), gamma);
}

/// Column-stacking vec.
template <typename Derived>
VectorX<typename Derived::Scalar> vec(const Eigen::MatrixBase<Derived>& m) {
  MatrixX<typename Derived::Scalar> tmp = m;
  return Eigen::Map<const VectorX<typename Derived::Scalar>>(tmp.data(), tmp.size());
}

/// Inverse of vec for a rows x cols target.
template <typename Derived>
MatrixX<typename Derived::Scalar> unvec(const Eigen::MatrixBase<Derived>& v, Index rows,
                                        Index cols) {
  if (v.size() != rows * cols) {
    throw DimensionError("unvec: length " + std::to_string(v.size()) + " does not fit " +
                         detail::shape_string(rows, cols));
  }
  VectorX<typename Derived::Scalar> tmp = v;
  return Eigen::Map<const MatrixX<typename Derived::Scalar>>(tmp.data(), rows, cols);
}

/// (A (x) G) v without forming the Kronecker product: vec(G V A^T).
template <typename DA, typename DG, typename DV>
VectorX<typename DV::Scalar> kron_matvec(const Eigen::MatrixBase<DA>& a,
                                         const Eigen::MatrixBase<DG>& g,
                                         const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DV::Scalar;
  if (a.rows() != a.cols() || g.rows() != g.cols()) {
    throw DimensionError("kron_matvec: factors must be square");
  }
  const Index m = a.rows();
  const Index n = g.rows();
  if (v.size() != m * n) {
    throw DimensionError("kron_matvec: vector length " + std::to_string(v.size()) +
                         " != " + std::to_string(m * n));
  }
  VectorX<Scalar> vv = v;
  Eigen::Map<const MatrixX<Scalar>> vm(vv.data(), n, m);
  MatrixX<Scalar> out = g * vm * a.transpose();
  return Eigen::Map<const VectorX<Scalar>>(out.data(), out.size());
}

/// Dense A (x) G with entry (i*n + p, j*n + q) = A(i, j) * G(p, q), where G is
/// n x n' (row block size n, column block size n'). Oracle-scale only.
template <typename DA, typename DG>
MatrixX<typename DA::Scalar> dense_kron(const Eigen::MatrixBase<DA>& a,
                                        const Eigen::MatrixBase<DG>& g,
                                        Index cap = kDenseKronCap) {
  const Index rows = a.rows() * g.rows();
  const Index cols = a.cols() * g.cols();
  if (rows > cap || cols > cap) {
    throw SizeError("dense_kron: result " + detail::shape_string(rows, cols) +
                    " exceeds cap " + std::to_string(cap));
  }
  MatrixX<typename DA::Scalar> out(rows, cols);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * g.rows(), j * g.cols(), g.rows(), g.cols()) = a(i, j) * g;
    }
  }
  return out;
}

}  // namespace kldwrm
