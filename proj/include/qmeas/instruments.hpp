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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmeas/observables.hpp"
#include "qmeas/random.hpp"

namespace qmeas {

/// One completely positive map in Kraus form, K_1..K_m on a dim-dimensional
/// space. Trace non-increasing: sum K^dag K <= I within tolerance.
class CPMap {
 public:
  CPMap(int dim, std::vector<cmat> kraus, const Tolerance& tol = {})
      : dim_(dim), kraus_(std::move(kraus)) {
    if (dim_ < 1) throw DimensionError("CPMap: dimension must be >= 1");
    if (kraus_.empty()) throw OperatorError("CPMap: Kraus list is empty");
    for (const cmat& k : kraus_) {
      if (k.rows() != dim_ || k.cols() != dim_) {
        throw DimensionError("CPMap: Kraus operator has wrong dimension");
      }
    }
    Eigen::SelfAdjointEigenSolver<cmat> solver(kraus_sum() -
                                               cmat::Identity(dim_, dim_));
    if (solver.eigenvalues().maxCoeff() > tol.eq_tol) {
      throw OperatorError("CPMap: sum of K^dag K exceeds the identity");
    }
  }

  int dim() const { return dim_; }
  const std::vector<cmat>& kraus() const { return kraus_; }

  /// Linear action sum_k K x K^dag (defined for any operator x).
  cmat apply(const cmat& x) const {
    if (x.rows() != dim_ || x.cols() != dim_) {
      throw DimensionError("CPMap: operand has wrong dimension");
    }
    cmat out = cmat::Zero(dim_, dim_);
    for (const cmat& k : kraus_) out += k * x * k.adjoint();
    return out;
  }

  cmat kraus_sum() const {
    cmat s = cmat::Zero(dim_, dim_);
    for (const cmat& k : kraus_) s += k.adjoint() * k;
    return s;
  }

 private:
  int dim_;
  std::vector<cmat> kraus_;
};

/// Choi matrix sum_ij e_ij (x) T(e_ij) of a linear map on dim x dim
/// operators. Hermitian exactly when the map preserves hermiticity.
class ChoiMatrix {
 public:
  ChoiMatrix(int map_dim, cmat matrix, const Tolerance& tol = {})
      : map_dim_(map_dim), m_(std::move(matrix)) {
    const Eigen::Index n = static_cast<Eigen::Index>(map_dim_) * map_dim_;
    if (map_dim_ < 1 || m_.rows() != n || m_.cols() != n) {
      throw DimensionError("ChoiMatrix: matrix must be map_dim^2 square");
    }
    if (!is_hermitian(m_, tol.eq_tol)) {
      throw OperatorError("ChoiMatrix: matrix is not Hermitian");
    }
  }

  int map_dim() const { return map_dim_; }
  const cmat& matrix() const { return m_; }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<cmat> solver((m_ + m_.adjoint()) / 2.0);
    return solver.eigenvalues().minCoeff();
  }

 private:
  int map_dim_;
  cmat m_;
};

inline ChoiMatrix choi_matrix(const CPMap& m) {
  const int d = m.dim();
  const Eigen::Index n = static_cast<Eigen::Index>(d) * d;
  cmat choi = cmat::Zero(n, n);
  for (const cmat& k : m.kraus()) {
    // vec(K)[(i, r)] = K(r, i): column-stacked in the e_ij convention
    cvec v(n);
    for (int i = 0; i < d; ++i) {
      for (int r = 0; r < d; ++r) {
        v(static_cast<Eigen::Index>(i) * d + r) = k(r, i);
      }
    }
    choi += v * v.adjoint();
  }
  return ChoiMatrix(d, std::move(choi));
}

/// Choi matrix of a map given only by its linear action; exists so that the
/// CP test can be exercised on maps with no Kraus form (e.g. the transpose).
inline ChoiMatrix choi_of_action(int dim,
                                 const std::function<cmat(const cmat&)>& action,
                                 const Tolerance& tol = {}) {
  if (dim < 1) throw DimensionError("choi_of_action: dimension must be >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(dim) * dim;
  cmat choi = cmat::Zero(n, n);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      cmat t = action(matrix_unit(dim, i, j));
      if (t.rows() != dim || t.cols() != dim) {
        throw DimensionError("choi_of_action: action changed the dimension");
      }
      choi.block(static_cast<Eigen::Index>(i) * dim,
                 static_cast<Eigen::Index>(j) * dim, dim, dim) = t;
    }
  }
  return ChoiMatrix(dim, std::move(choi), tol);
}

inline bool cp_check(const ChoiMatrix& c, const Tolerance& tol = {}) {
  return c.min_eigenvalue() >= -tol.eq_tol;
}

inline bool cp_check(const CPMap& m, const Tolerance& tol = {}) {
  return cp_check(choi_matrix(m), tol);
}

/// Canonical Kraus operators of a positive semidefinite Choi matrix;
/// eigenvalues at or below `threshold` are discarded.
inline std::vector<cmat> kraus_from_choi(const ChoiMatrix& c,
                                         double threshold = 1e-12) {
  const int d = c.map_dim();
  Eigen::SelfAdjointEigenSolver<cmat> solver(
      (c.matrix() + c.matrix().adjoint()) / 2.0);
  std::vector<cmat> kraus;
  for (Eigen::Index m = 0; m < solver.eigenvalues().size(); ++m) {
    const double lambda = solver.eigenvalues()(m);
    if (lambda <= threshold) continue;
    const double scale = std::sqrt(lambda);
    cmat k(d, d);
    for (int i = 0; i < d; ++i) {
      for (int r = 0; r < d; ++r) {
        k(r, i) = scale * solver.eigenvectors()(
                              static_cast<Eigen::Index>(i) * d + r, m);
      }
    }
    kraus.push_back(std::move(k));
  }
  return kraus;
}

/// An operational distribution: one CP branch per spectrum point of the
/// measured observable. T over a general outcome set is the sum of its
/// branches. Construction checks only structure; semantic validity (the
/// Davies-Lewis axioms) is probed by dl_axioms_check so that deliberately
/// broken instruments remain expressible as test fixtures.
class Instrument {
 public:
  Instrument(Observable observable, std::vector<CPMap> branches)
      : observable_(std::move(observable)), branches_(std::move(branches)) {
    if (static_cast<int>(branches_.size()) != observable_.n_outcomes()) {
      throw DimensionError("Instrument: one branch per spectrum point required");
    }
    for (const CPMap& b : branches_) {
      if (b.dim() != observable_.dim()) {
        throw DimensionError("Instrument: branch dimension mismatch");
      }
    }
  }

  const Observable& observable() const { return observable_; }
  const std::vector<CPMap>& branches() const { return branches_; }
  int dim() const { return observable_.dim(); }

  /// Raw linear action of T_s on an arbitrary operator.
  cmat apply(const OutcomeSet& s, const cmat& x) const {
    if (s.owner_id() != observable_.id()) {
      throw OwnershipError("Instrument: outcome set belongs to another observable");
    }
    cmat out = cmat::Zero(dim(), dim());
    for (int i : s.indices()) {
      out += branches_[static_cast<std::size_t>(i)].apply(x);
    }
    return out;
  }

  /// T over the whole outcome space (the nonselective map T_R).
  cmat apply_total(const cmat& x) const {
    cmat out = cmat::Zero(dim(), dim());
    for (const CPMap& b : branches_) out += b.apply(x);
    return out;
  }

  /// Norm of sum_branches sum_k K^dag K - I; zero for trace-preserving totals.
  double total_residual() const {
    cmat s = cmat::Zero(dim(), dim());
    for (const CPMap& b : branches_) s += b.kraus_sum();
    return op_norm(s - cmat::Identity(dim(), dim()));
  }

 private:
  Observable observable_;
  std::vector<CPMap> branches_;
};

/// Projection-postulate instrument: branch a acts as rho -> E_a rho E_a.
inline Instrument luders_instrument(const Observable& a) {
  std::vector<CPMap> branches;
  branches.reserve(a.projectors().size());
  for (const cmat& p : a.projectors()) {
    branches.emplace_back(a.dim(), std::vector<cmat>{p});
  }
  return Instrument(a, std::move(branches));
}

/// Photon-counter-like instrument: T_a(rho) = |r><r| Tr[E_a rho]. Satisfies
/// the Davies-Lewis axioms but violates the projection postulate.
inline Instrument measure_and_reset_instrument(const Observable& a,
                                               int reset_index = 0) {
  const int d = a.dim();
  if (reset_index < 0 || reset_index >= d) {
    throw DimensionError("measure_and_reset_instrument: reset index out of range");
  }
  std::vector<CPMap> branches;
  branches.reserve(a.projectors().size());
  for (const cmat& e : a.projectors()) {
    std::vector<cmat> kraus;
    kraus.reserve(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
      // K_k = |reset><k| E_a
      kraus.push_back(basis_ket(d, reset_index) *
                      basis_ket(d, k).adjoint() * e);
    }
    branches.emplace_back(d, std::move(kraus));
  }
  return Instrument(a, std::move(branches));
}

inline cmat instrument_apply(const Instrument& t, const OutcomeSet& s,
                             const DensityOperator& rho) {
  if (rho.dim() != t.dim()) {
    throw DimensionError("instrument_apply: state dimension mismatch");
  }
  return t.apply(s, rho.matrix());
}

/// Outcome probability Tr[T_s(rho)], clamped to [0, 1].
inline double outcome_probability(const Instrument& t, const OutcomeSet& s,
                                  const DensityOperator& rho) {
  double p = instrument_apply(t, s, rho).trace().real();
  return std::clamp(p, 0.0, 1.0);
}

/// Conditional state T_s(rho)/Tr[T_s(rho)], or nullopt when the outcome
/// probability does not exceed prob_floor (the conditional state is then
/// indefinite; no stand-in is fabricated).
inline std::optional<DensityOperator> posterior_state(
    const Instrument& t, const OutcomeSet& s, const DensityOperator& rho,
    const Tolerance& tol = {}, double prob_floor = 1e-12) {
  cmat out = instrument_apply(t, s, rho);
  const double p = out.trace().real();
  if (p <= prob_floor) return std::nullopt;
  out /= p;
  out = (out + out.adjoint()) / 2.0;
  return DensityOperator(std::move(out), tol);
}

struct AxiomResult {
  bool pass = false;
  double residual = 0.0;
};

/// Davies-Lewis axiom report: (i) finite additivity over disjoint
/// partitions, (ii) probability reproducibility Tr[T_s(rho)] = Tr[E^A(s)
/// rho], (iii) positivity of T_s(rho).
struct DlAxiomsReport {
  AxiomResult additivity;
  AxiomResult reproducibility;
  AxiomResult positivity;

  bool pass() const {
    return additivity.pass && reproducibility.pass && positivity.pass;
  }
  double max_residual() const {
    return std::max({additivity.residual, reproducibility.residual,
                     positivity.residual});
  }
};

namespace detail {

/// Probe states: the spanning set plus a few seeded random densities.
inline std::vector<DensityOperator> probe_states(int dim,
                                                 std::uint64_t seed,
                                                 int extra = 4) {
  std::vector<DensityOperator> states = spanning_density_set(dim);
  Prng g(seed);
  for (int i = 0; i < extra; ++i) states.push_back(random_density(dim, g));
  return states;
}

}  // namespace detail

inline DlAxiomsReport dl_axioms_check(const Instrument& t,
                                      const Tolerance& tol = {}) {
  const Observable& a = t.observable();
  const int k = a.n_outcomes();
  // fixed internal probe seed: the operation carries no seed parameter
  const std::vector<DensityOperator> states =
      detail::probe_states(t.dim(), 0x51CAB0DDull);

  DlAxiomsReport report;

  // (i) additivity against two deterministic partitions of the full set:
  // all singletons, and the even/odd interleaving.
  std::vector<std::vector<OutcomeSet>> partitions;
  {
    std::vector<OutcomeSet> singletons;
    for (int i = 0; i < k; ++i) singletons.push_back(a.singleton(i));
    partitions.push_back(std::move(singletons));
    std::vector<int> even;
    std::vector<int> odd;
    for (int i = 0; i < k; ++i) (i % 2 == 0 ? even : odd).push_back(i);
    std::vector<OutcomeSet> blocks;
    blocks.push_back(a.outcome_set(std::move(even)));
    blocks.push_back(a.outcome_set(std::move(odd)));
    partitions.push_back(std::move(blocks));
  }
  double add_res = 0.0;
  for (const auto& partition : partitions) {
    for (const DensityOperator& rho : states) {
      cmat whole = t.apply_total(rho.matrix());
      cmat sum = cmat::Zero(t.dim(), t.dim());
      for (const OutcomeSet& part : partition) {
        if (!part.empty()) sum += t.apply(part, rho.matrix());
      }
      add_res = std::max(add_res, op_norm(whole - sum));
    }
  }
  report.additivity = {add_res <= tol.eq_tol, add_res};

  // (ii) reproducibility on all singletons and the full set.
  double rep_res = 0.0;
  for (const DensityOperator& rho : states) {
    for (int i = 0; i < k; ++i) {
      const OutcomeSet s = a.singleton(i);
      const double lhs = t.apply(s, rho.matrix()).trace().real();
      const double rhs =
          (spectral_projector(a, s) * rho.matrix()).trace().real();
      rep_res = std::max(rep_res, std::abs(lhs - rhs));
    }
    const double total = t.apply_total(rho.matrix()).trace().real();
    rep_res = std::max(rep_res, std::abs(total - 1.0));
  }
  report.reproducibility = {rep_res <= tol.eq_tol, rep_res};

  // (iii) positivity of T_s(rho) for singletons and the full set.
  double min_eig = 0.0;
  for (const DensityOperator& rho : states) {
    for (int i = 0; i <= k; ++i) {
      cmat out = i < k ? t.apply(a.singleton(i), rho.matrix())
                       : t.apply_total(rho.matrix());
      out = (out + out.adjoint()) / 2.0;
      Eigen::SelfAdjointEigenSolver<cmat> solver(out);
      min_eig = std::min(min_eig, solver.eigenvalues().minCoeff());
    }
  }
  const double pos_res = std::max(0.0, -min_eig);
  report.positivity = {pos_res <= tol.eq_tol, pos_res};

  return report;
}

/// Structural identities of measurement-induced state changes: for every
/// outcome set s and trace class operator x,
///   T_s(x) = T_R(E x) = T_R(x E) = T_R(E x E)   with E = E^A(s).
struct Theorem2Report {
  bool precondition_ok = false;
  DlAxiomsReport precondition;
  double residual_left = 0.0;
  double residual_right = 0.0;
  double residual_sandwich = 0.0;
  bool pass = false;

  double max_residual() const {
    return std::max({residual_left, residual_right, residual_sandwich});
  }
};

inline Theorem2Report theorem2_check(const Instrument& t,
                                     const Tolerance& tol = {},
                                     int trials = 20,
                                     std::uint64_t seed = 0x7E02C4ECull) {
  Theorem2Report report;
  report.precondition = dl_axioms_check(t, tol);
  report.precondition_ok = report.precondition.pass();
  if (!report.precondition_ok) return report;  // identities are not claimed

  const Observable& a = t.observable();
  const int d = t.dim();

  // Matrix units span all operators, so equality on them decides equality on
  // every trace class operator; seeded random densities, indefinite
  // Hermitian operators and general complex matrices are kept as redundancy.
  std::vector<cmat> test_ops;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) test_ops.push_back(matrix_unit(d, i, j));
  }
  Prng g(seed);
  for (int n = 0; n < trials; ++n) {
    switch (n % 3) {
      case 0: test_ops.push_back(random_density(d, g).matrix()); break;
      case 1: test_ops.push_back(random_hermitian(d, g)); break;
      default: test_ops.push_back(random_ginibre(d, g)); break;
    }
  }

  const auto sets = a.all_outcome_sets();
  for (const cmat& x : test_ops) {
    for (const OutcomeSet& s : sets) {
      const cmat e = spectral_projector(a, s);
      const cmat lhs = t.apply(s, x);
      report.residual_left =
          std::max(report.residual_left, op_norm(lhs - t.apply_total(e * x)));
      report.residual_right =
          std::max(report.residual_right, op_norm(lhs - t.apply_total(x * e)));
      report.residual_sandwich = std::max(
          report.residual_sandwich, op_norm(lhs - t.apply_total(e * x * e)));
    }
  }
  report.pass = report.max_residual() <= tol.eq_tol;
  return report;
}

}  // namespace qmeas
