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

#include <string>
#include <vector>

#include "qmeas/types.hpp"

namespace qmeas {

/// Matrix unit e_ij = |i><j|.
inline cmat matrix_unit(int dim, int i, int j) {
  if (dim < 1 || i < 0 || j < 0 || i >= dim || j >= dim) {
    throw DimensionError("matrix_unit: index out of range");
  }
  cmat m = cmat::Zero(dim, dim);
  m(i, j) = cplx(1.0, 0.0);
  return m;
}

inline cvec basis_ket(int dim, int i) {
  if (dim < 1 || i < 0 || i >= dim) {
    throw DimensionError("basis_ket: index out of range");
  }
  cvec v = cvec::Zero(dim);
  v(i) = cplx(1.0, 0.0);
  return v;
}

/// Spectral norm (largest singular value).
inline double op_norm(const cmat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<cmat> svd(m);
  return svd.singularValues()(0);
}

inline bool is_hermitian(const cmat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return op_norm(m - m.adjoint()) <= tol;
}

/// Kronecker product with the row-major index convention
/// (i*b.rows()+k, j*b.cols()+l) -> a(i,j) * b(k,l). Every module in the
/// library relies on this exact convention.
inline cmat tensor(const cmat& a, const cmat& b) {
  cmat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

inline cvec tensor(const cvec& a, const cvec& b) {
  cvec out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    out.segment(i * b.size(), b.size()) = a(i) * b;
  }
  return out;
}

/// Trace over the second tensor factor: x on H1 (x) H2 -> operator on H1.
/// Linear and trace preserving.
inline cmat partial_trace_second(const cmat& x, int dim1, int dim2) {
  if (dim1 < 1 || dim2 < 1 || x.rows() != x.cols() ||
      x.rows() != static_cast<Eigen::Index>(dim1) * dim2) {
    throw DimensionError("partial_trace_second: operator is not " +
                         std::to_string(dim1) + "x" + std::to_string(dim2) +
                         " bipartite");
  }
  cmat out = cmat::Zero(dim1, dim1);
  for (int i = 0; i < dim1; ++i) {
    for (int j = 0; j < dim1; ++j) {
      cplx s(0.0, 0.0);
      for (int k = 0; k < dim2; ++k) {
        s += x(static_cast<Eigen::Index>(i) * dim2 + k,
               static_cast<Eigen::Index>(j) * dim2 + k);
      }
      out(i, j) = s;
    }
  }
  return out;
}

/// One eigenvalue cluster of a Hermitian operator: the (mean) eigenvalue and
/// the orthogonal projector onto its eigenspace.
struct EigenPair {
  double eigenvalue;
  cmat projector;
};

/// Spectral decomposition of a Hermitian operator. Eigenvalues are sorted
/// ascending; values closer than eig_cluster_tol are merged into a single
/// cluster whose projector spans the combined eigenspace. The result
/// satisfies sum_i P_i = I and sum_i lambda_i P_i = h within eq_tol.
inline std::vector<EigenPair> eig_hermitian(const cmat& h,
                                            const Tolerance& tol = {}) {
  if (h.rows() != h.cols() || h.rows() < 1) {
    throw DimensionError("eig_hermitian: operator must be square");
  }
  if (!is_hermitian(h, tol.eq_tol)) {
    throw OperatorError("eig_hermitian: operator is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<cmat> solver((h + h.adjoint()) / 2.0);
  if (solver.info() != Eigen::Success) {
    throw OperatorError("eig_hermitian: eigensolver failed to converge");
  }
  const auto& vals = solver.eigenvalues();   // ascending
  const auto& vecs = solver.eigenvectors();  // orthonormal columns

  std::vector<EigenPair> out;
  Eigen::Index start = 0;
  while (start < vals.size()) {
    Eigen::Index stop = start + 1;
    while (stop < vals.size() &&
           vals(stop) - vals(stop - 1) <= tol.eig_cluster_tol) {
      ++stop;
    }
    double mean = 0.0;
    for (Eigen::Index k = start; k < stop; ++k) mean += vals(k);
    mean /= static_cast<double>(stop - start);

    cmat block = vecs.middleCols(start, stop - start);
    cmat proj = block * block.adjoint();
    proj = (proj + proj.adjoint()) / 2.0;
    out.push_back({mean, std::move(proj)});
    start = stop;
  }
  return out;
}

}  // namespace qmeas
