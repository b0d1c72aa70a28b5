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

#include <complex>

#include <Eigen/Dense>

#include "qmeas/errors.hpp"

namespace qmeas {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;

/// Comparison thresholds used across the library. eq_tol bounds
/// operator-norm residuals in equality checks; eig_cluster_tol is the gap
/// below which adjacent eigenvalues are merged into one degenerate cluster.
struct Tolerance {
  double eq_tol = 1e-9;
  double eig_cluster_tol = 1e-8;

  Tolerance() = default;
  Tolerance(double eq, double cluster) : eq_tol(eq), eig_cluster_tol(cluster) {
    if (!(eq > 0.0) || eq > 1e-4 || !(cluster > 0.0) || cluster > 1e-4) {
      throw PreconditionError("Tolerance fields must lie in (0, 1e-4]");
    }
  }
};

}  // namespace qmeas
