// Copyright 2026 The qmeas authors
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

#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "qmeas/linalg.hpp"

namespace qmeas {

/// Unit-norm pure state.
class StateVector {
 public:
  explicit StateVector(cvec amplitudes, const Tolerance& tol = {})
      : v_(std::move(amplitudes)) {
    if (v_.size() < 1) throw DimensionError("StateVector: dimension must be >= 1");
    if (std::abs(v_.norm() - 1.0) > tol.eq_tol) {
      throw OperatorError("StateVector: amplitudes are not unit norm");
    }
  }

  int dim() const { return static_cast<int>(v_.size()); }
  const cvec& amplitudes() const { return v_; }

 private:
  cvec v_;
};

/// Positive semidefinite, unit-trace operator. The constructor validates all
/// three invariants (hermiticity, positivity, trace) within tol.
class DensityOperator {
 public:
  explicit DensityOperator(cmat matrix, const Tolerance& tol = {})
      : m_(std::move(matrix)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) {
      throw DimensionError("DensityOperator: matrix must be square");
    }
    if (!is_hermitian(m_, tol.eq_tol)) {
      throw OperatorError("DensityOperator: matrix is not Hermitian");
    }
    Eigen::SelfAdjointEigenSolver<cmat> solver((m_ + m_.adjoint()) / 2.0);
    if (solver.eigenvalues().minCoeff() < -tol.eq_tol) {
      throw OperatorError("DensityOperator: matrix has a negative eigenvalue");
    }
    cplx tr = m_.trace();
    if (std::abs(tr - cplx(1.0, 0.0)) > tol.eq_tol) {
      throw OperatorError("DensityOperator: trace is not 1");
    }
  }

  static DensityOperator pure(const StateVector& psi, const Tolerance& tol = {}) {
    const cvec& v = psi.amplitudes();
    return DensityOperator(v * v.adjoint(), tol);
  }

  static DensityOperator maximally_mixed(int dim) {
    if (dim < 1) throw DimensionError("DensityOperator: dimension must be >= 1");
    return DensityOperator(cmat::Identity(dim, dim) / static_cast<double>(dim));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const cmat& matrix() const { return m_; }

 private:
  cmat m_;
};

/// dim^2 pure states whose density matrices span the real vector space of
/// Hermitian operators: the basis states |i><i| plus, for each i<j, the
/// states (|i>+|j>)/sqrt2 and (|i>+i|j>)/sqrt2. Because every quantity the
/// library verifies "for all rho" is linear in rho, equality on this set
/// decides equality everywhere.
inline std::vector<DensityOperator> spanning_density_set(int dim) {
  if (dim < 1) throw DimensionError("spanning_density_set: dimension must be >= 1");
  std::vector<DensityOperator> out;
  out.reserve(static_cast<std::size_t>(dim) * dim);
  for (int i = 0; i < dim; ++i) {
    out.push_back(DensityOperator::pure(StateVector(basis_ket(dim, i))));
  }
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < dim; ++i) {
    for (int j = i + 1; j < dim; ++j) {
      cvec real_sup = inv_sqrt2 * (basis_ket(dim, i) + basis_ket(dim, j));
      cvec imag_sup =
          inv_sqrt2 * (basis_ket(dim, i) + cplx(0.0, 1.0) * basis_ket(dim, j));
      out.push_back(DensityOperator::pure(StateVector(std::move(real_sup))));
      out.push_back(DensityOperator::pure(StateVector(std::move(imag_sup))));
    }
  }
  return out;
}

}  // namespace qmeas
