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
#include <cstdint>

#include "qmeas/states.hpp"

namespace qmeas {

/// Counter-based splittable generator (splitmix64 core, Box-Muller normals).
/// Self-contained so that identical seeds give identical streams on every
/// platform and standard library.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  /// Derive an independent substream seed. Stable scheme: substream k of a
  /// run seed is derive(seed, k); documented so parallel check execution
  /// stays reproducible.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Prng p(seed ^ (0xD1B54A32D192ED03ull * (stream + 1)));
    p.next_u64();
    return p.next_u64();
  }

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Ginibre matrix: i.i.d. standard complex normal entries.
inline cmat random_ginibre(int dim, Prng& g) {
  if (dim < 1) throw DimensionError("random_ginibre: dimension must be >= 1");
  cmat m(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      // consume in fixed order, real part first
      const double re = g.normal();
      const double im = g.normal();
      m(i, j) = cplx(re, im) / std::sqrt(2.0);
    }
  }
  return m;
}

/// Full-rank (with probability 1) random density operator, G G^dag / Tr.
inline DensityOperator random_density(int dim, Prng& g) {
  cmat gin = random_ginibre(dim, g);
  cmat rho = gin * gin.adjoint();
  rho /= rho.trace();
  rho = (rho + rho.adjoint()) / 2.0;
  return DensityOperator(std::move(rho));
}

inline DensityOperator random_density(int dim, std::uint64_t seed) {
  Prng g(seed);
  return random_density(dim, g);
}

/// Haar-style random unitary: QR of a Ginibre matrix with the R-diagonal
/// phases folded into Q.
inline cmat random_unitary(int dim, Prng& g) {
  cmat gin = random_ginibre(dim, g);
  Eigen::HouseholderQR<cmat> qr(gin);
  cmat q = qr.householderQ();
  cmat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < dim; ++i) {
    cplx d = r(i, i);
    cplx phase = std::abs(d) > 0.0 ? d / std::abs(d) : cplx(1.0, 0.0);
    q.col(i) *= phase;
  }
  return q;
}

inline cmat random_unitary(int dim, std::uint64_t seed) {
  Prng g(seed);
  return random_unitary(dim, g);
}

inline cmat random_hermitian(int dim, Prng& g) {
  cmat gin = random_ginibre(dim, g);
  return (gin + gin.adjoint()) / 2.0;
}

inline cmat random_hermitian(int dim, std::uint64_t seed) {
  Prng g(seed);
  return random_hermitian(dim, g);
}

inline StateVector random_state_vector(int dim, Prng& g) {
  if (dim < 1) throw DimensionError("random_state_vector: dimension must be >= 1");
  cvec v(dim);
  for (int i = 0; i < dim; ++i) {
    const double re = g.normal();
    const double im = g.normal();
    v(i) = cplx(re, im);
  }
  v.normalize();
  return StateVector(std::move(v));
}

inline StateVector random_state_vector(int dim, std::uint64_t seed) {
  Prng g(seed);
  return random_state_vector(dim, g);
}

}  // namespace qmeas
