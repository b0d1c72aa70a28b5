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

#include "qmeas/states.hpp"

namespace qmeas {

inline cmat pauli_x() {
  cmat m(2, 2);
  m << cplx(0, 0), cplx(1, 0), cplx(1, 0), cplx(0, 0);
  return m;
}

inline cmat pauli_y() {
  cmat m(2, 2);
  m << cplx(0, 0), cplx(0, -1), cplx(0, 1), cplx(0, 0);
  return m;
}

inline cmat pauli_z() {
  cmat m(2, 2);
  m << cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(-1, 0);
  return m;
}

/// Controlled NOT, control on the first qubit: |i,j> -> |i, j xor i>.
inline cmat cnot() {
  cmat m = cmat::Zero(4, 4);
  m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = cplx(1, 0);
  return m;
}

/// Swap of two d-dimensional factors.
inline cmat swap_gate(int d) {
  if (d < 1) throw DimensionError("swap_gate: dimension must be >= 1");
  cmat m = cmat::Zero(static_cast<Eigen::Index>(d) * d,
                      static_cast<Eigen::Index>(d) * d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i) * d + j,
        static_cast<Eigen::Index>(j) * d + i) = cplx(1, 0);
    }
  }
  return m;
}

inline StateVector basis_state(int dim, int i) {
  return StateVector(basis_ket(dim, i));
}

inline StateVector plus_state() {
  cvec v(2);
  v << cplx(1, 0), cplx(1, 0);
  v /= std::sqrt(2.0);
  return StateVector(std::move(v));
}

/// (|00> + |11>)/sqrt2.
inline StateVector bell_phi_plus() {
  cvec v = cvec::Zero(4);
  v(0) = v(3) = cplx(1.0 / std::sqrt(2.0), 0);
  return StateVector(std::move(v));
}

/// (|01> - |10>)/sqrt2.
inline StateVector singlet_state() {
  cvec v = cvec::Zero(4);
  v(1) = cplx(1.0 / std::sqrt(2.0), 0);
  v(2) = cplx(-1.0 / std::sqrt(2.0), 0);
  return StateVector(std::move(v));
}

/// Spin along the direction at angle theta from z in the x-z plane:
/// cos(theta) sz + sin(theta) sx.
inline cmat spin_direction(double theta) {
  return std::cos(theta) * pauli_z() + std::sin(theta) * pauli_x();
}

}  // namespace qmeas
