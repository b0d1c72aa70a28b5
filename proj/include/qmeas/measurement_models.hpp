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
#include <utility>
#include <vector>

#include "qmeas/instruments.hpp"
#include "qmeas/qubits.hpp"

namespace qmeas {

/// Unitary dilation of a measuring apparatus: ancilla state sigma, coupling
/// unitary U on object (x) ancilla, meter observable on the ancilla and the
/// declared measured observable on the object. Construction validates the
/// dimensions and the unitarity of U; whether the model really measures its
/// declared observable is a separate, checkable predicate
/// (measures_observable_check), so defective models remain constructible as
/// fixtures.
class MeasurementModel {
 public:
  MeasurementModel(int obj_dim, int anc_dim, DensityOperator sigma, cmat u,
                   Observable meter, Observable measured,
                   const Tolerance& tol = {})
      : obj_dim_(obj_dim),
        anc_dim_(anc_dim),
        sigma_(std::move(sigma)),
        u_(std::move(u)),
        meter_(std::move(meter)),
        measured_(std::move(measured)) {
    if (obj_dim_ < 1 || anc_dim_ < 1) {
      throw DimensionError("MeasurementModel: dimensions must be >= 1");
    }
    if (sigma_.dim() != anc_dim_) {
      throw DimensionError("MeasurementModel: ancilla state dimension mismatch");
    }
    if (meter_.dim() != anc_dim_) {
      throw DimensionError("MeasurementModel: meter must act on the ancilla");
    }
    if (measured_.dim() != obj_dim_) {
      throw DimensionError("MeasurementModel: measured observable must act on the object");
    }
    const Eigen::Index n = total_dim();
    if (u_.rows() != n || u_.cols() != n) {
      throw DimensionError("MeasurementModel: coupling unitary has wrong dimension");
    }
    if (op_norm(u_.adjoint() * u_ - cmat::Identity(n, n)) > tol.eq_tol) {
      throw OperatorError("MeasurementModel: coupling operator is not unitary");
    }
  }

  int obj_dim() const { return obj_dim_; }
  int anc_dim() const { return anc_dim_; }
  Eigen::Index total_dim() const {
    return static_cast<Eigen::Index>(obj_dim_) * anc_dim_;
  }
  const DensityOperator& sigma() const { return sigma_; }
  const cmat& u() const { return u_; }
  const Observable& meter() const { return meter_; }
  const Observable& measured() const { return measured_; }

 private:
  int obj_dim_;
  int anc_dim_;
  DensityOperator sigma_;
  cmat u_;
  Observable meter_;
  Observable measured_;
};

/// Injection of the measured spectrum into the meter spectrum: outcome a of
/// the measured observable is read off the pointer value m_a. Every measured
/// eigenvalue is mapped, no meter value twice.
class OutcomeCorrespondence {
 public:
  OutcomeCorrespondence(const Observable& measured, const Observable& meter,
                        const std::vector<std::pair<double, double>>& value_pairs,
                        const Tolerance& tol = {})
      : measured_id_(measured.id()),
        meter_id_(meter.id()),
        meter_(meter),
        meter_index_by_measured_(
            static_cast<std::size_t>(measured.n_outcomes()), -1) {
    if (static_cast<int>(value_pairs.size()) != measured.n_outcomes()) {
      throw PreconditionError(
          "OutcomeCorrespondence: every measured eigenvalue needs exactly one pair");
    }
    for (const auto& [a_value, m_value] : value_pairs) {
      const int ai = measured.index_of_value(a_value, tol);
      const int mi = meter.index_of_value(m_value, tol);
      if (meter_index_by_measured_[static_cast<std::size_t>(ai)] != -1) {
        throw PreconditionError(
            "OutcomeCorrespondence: measured eigenvalue mapped twice");
      }
      meter_index_by_measured_[static_cast<std::size_t>(ai)] = mi;
    }
    std::vector<int> image = meter_index_by_measured_;
    std::sort(image.begin(), image.end());
    if (std::adjacent_find(image.begin(), image.end()) != image.end()) {
      throw PreconditionError("OutcomeCorrespondence: map is not injective");
    }
  }

  /// Pairs each measured eigenvalue with the identical meter eigenvalue;
  /// requires the meter spectrum to contain the measured spectrum.
  static OutcomeCorrespondence identity_map(const Observable& measured,
                                            const Observable& meter,
                                            const Tolerance& tol = {}) {
    std::vector<std::pair<double, double>> pairs;
    for (double v : measured.spectrum()) pairs.emplace_back(v, v);
    return OutcomeCorrespondence(measured, meter, pairs, tol);
  }

  std::uint64_t measured_id() const { return measured_id_; }
  std::uint64_t meter_id() const { return meter_id_; }

  int meter_index(int measured_index) const {
    return meter_index_by_measured_.at(static_cast<std::size_t>(measured_index));
  }
  const std::vector<int>& meter_indices() const {
    return meter_index_by_measured_;
  }

  /// Meter outcome indices that no measured eigenvalue maps to.
  std::vector<int> unmatched_meter_indices() const {
    std::vector<int> out;
    for (int j = 0; j < meter_.n_outcomes(); ++j) {
      if (std::find(meter_index_by_measured_.begin(),
                    meter_index_by_measured_.end(),
                    j) == meter_index_by_measured_.end()) {
        out.push_back(j);
      }
    }
    return out;
  }

  /// Image of an outcome set of the measured observable on the meter.
  OutcomeSet meter_set(const OutcomeSet& s) const {
    if (s.owner_id() != measured_id_) {
      throw OwnershipError(
          "OutcomeCorrespondence: outcome set belongs to another observable");
    }
    std::vector<int> mapped;
    mapped.reserve(s.indices().size());
    for (int i : s.indices()) mapped.push_back(meter_index(i));
    return meter_.outcome_set(std::move(mapped));
  }

  std::vector<std::pair<double, double>> value_pairs(
      const Observable& measured) const {
    if (measured.id() != measured_id_) {
      throw OwnershipError("OutcomeCorrespondence: wrong measured observable");
    }
    std::vector<std::pair<double, double>> out;
    for (int i = 0; i < static_cast<int>(meter_index_by_measured_.size()); ++i) {
      out.emplace_back(measured.spectrum()[static_cast<std::size_t>(i)],
                       meter_.spectrum()[static_cast<std::size_t>(meter_index(i))]);
    }
    return out;
  }

 private:
  std::uint64_t measured_id_;
  std::uint64_t meter_id_;
  Observable meter_;
  std::vector<int> meter_index_by_measured_;
};

/// A measurement model bundled with the correspondence it is read through.
struct ModelWithCorrespondence {
  MeasurementModel model;
  OutcomeCorrespondence corr;
};

namespace detail {

inline void require_correspondence(const MeasurementModel& m,
                                   const OutcomeCorrespondence& corr) {
  if (corr.measured_id() != m.measured().id() ||
      corr.meter_id() != m.meter().id()) {
    throw OwnershipError(
        "OutcomeCorrespondence does not belong to this measurement model");
  }
}

inline cmat dilated_state(const MeasurementModel& m, const cmat& x) {
  return m.u() * tensor(x, m.sigma().matrix()) * m.u().adjoint();
}

}  // namespace detail

/// Nonselective state change rho -> Tr_A[U (rho (x) sigma) U^dag] on an
/// arbitrary operator (the map is linear, so general operators are allowed).
inline cmat nonselective_raw(const MeasurementModel& m, const cmat& x) {
  if (x.rows() != m.obj_dim() || x.cols() != m.obj_dim()) {
    throw DimensionError("nonselective_change: operand dimension mismatch");
  }
  return partial_trace_second(detail::dilated_state(m, x), m.obj_dim(),
                              m.anc_dim());
}

inline DensityOperator nonselective_change(const MeasurementModel& m,
                                           const DensityOperator& rho,
                                           const Tolerance& tol = {}) {
  cmat out = nonselective_raw(m, rho.matrix());
  out = (out + out.adjoint()) / 2.0;
  return DensityOperator(std::move(out), tol);
}

/// Heisenberg dual of the nonselective change:
/// x -> Tr_A[U^dag (x (x) I) U (I (x) sigma)], the unique Y with
/// Tr[Y rho] = Tr[x T(rho)] for all rho.
inline cmat heisenberg_image(const MeasurementModel& m, const cmat& x) {
  if (x.rows() != m.obj_dim() || x.cols() != m.obj_dim()) {
    throw DimensionError("heisenberg_image: operand dimension mismatch");
  }
  const cmat i_anc = cmat::Identity(m.anc_dim(), m.anc_dim());
  const cmat i_obj = cmat::Identity(m.obj_dim(), m.obj_dim());
  cmat big = m.u().adjoint() * tensor(x, i_anc) * m.u() *
             tensor(i_obj, m.sigma().matrix());
  return partial_trace_second(big, m.obj_dim(), m.anc_dim());
}

/// Unnormalized selective state change for outcome set s read through corr:
/// x -> Tr_A[(I (x) E) U (x (x) sigma) U^dag (I (x) E)],  E = E^M(corr(s)).
inline cmat selective_raw(const MeasurementModel& m,
                          const OutcomeCorrespondence& corr,
                          const OutcomeSet& s, const cmat& x) {
  detail::require_correspondence(m, corr);
  if (x.rows() != m.obj_dim() || x.cols() != m.obj_dim()) {
    throw DimensionError("selective state change: operand dimension mismatch");
  }
  const cmat e_meter = spectral_projector(m.meter(), corr.meter_set(s));
  const cmat proj = tensor(cmat::Identity(m.obj_dim(), m.obj_dim()), e_meter);
  const cmat big = proj * detail::dilated_state(m, x) * proj;
  return partial_trace_second(big, m.obj_dim(), m.anc_dim());
}

/// Worst deviation of the model's outcome statistics from the Born
/// statistics of its declared observable, over a spanning state set (exact
/// by linearity), seeded random states, and the requirement that unmatched
/// meter outcomes never fire.
inline double measures_observable_residual(const MeasurementModel& m,
                                           const OutcomeCorrespondence& corr,
                                           int trials = 8,
                                           std::uint64_t seed = 0xB095C0DEull) {
  detail::require_correspondence(m, corr);
  std::vector<DensityOperator> states = spanning_density_set(m.obj_dim());
  Prng g(seed);
  for (int i = 0; i < trials; ++i) {
    states.push_back(random_density(m.obj_dim(), g));
  }
  const cmat i_obj = cmat::Identity(m.obj_dim(), m.obj_dim());
  const Observable& a = m.measured();
  double residual = 0.0;
  for (const DensityOperator& rho : states) {
    const cmat big = detail::dilated_state(m, rho.matrix());
    for (int ai = 0; ai < a.n_outcomes(); ++ai) {
      const cmat e_meter =
          spectral_projector(m.meter(), m.meter().singleton(corr.meter_index(ai)));
      const double lhs = (tensor(i_obj, e_meter) * big).trace().real();
      const double rhs =
          (a.projectors()[static_cast<std::size_t>(ai)] * rho.matrix())
              .trace()
              .real();
      residual = std::max(residual, std::abs(lhs - rhs));
    }
    for (int j : corr.unmatched_meter_indices()) {
      const cmat e_meter = spectral_projector(m.meter(), m.meter().singleton(j));
      const double p = (tensor(i_obj, e_meter) * big).trace().real();
      residual = std::max(residual, std::abs(p));
    }
  }
  return residual;
}

inline bool measures_observable_check(const MeasurementModel& m,
                                      const OutcomeCorrespondence& corr,
                                      int trials = 8,
                                      std::uint64_t seed = 0xB095C0DEull,
                                      const Tolerance& tol = {}) {
  return measures_observable_residual(m, corr, trials, seed) <= tol.eq_tol;
}

/// Instrument induced by the model: branch a is the selective change for the
/// singleton {a}, converted to canonical Kraus form through its Choi matrix.
inline Instrument induced_instrument(const MeasurementModel& m,
                                     const OutcomeCorrespondence& corr,
                                     const Tolerance& tol = {},
                                     double kraus_threshold = 1e-12) {
  if (!measures_observable_check(m, corr, 8, 0xB095C0DEull, tol)) {
    throw MeasurementError(
        "induced_instrument: model does not measure its declared observable");
  }
  const Observable& a = m.measured();
  std::vector<CPMap> branches;
  branches.reserve(static_cast<std::size_t>(a.n_outcomes()));
  for (int ai = 0; ai < a.n_outcomes(); ++ai) {
    const OutcomeSet s = a.singleton(ai);
    ChoiMatrix choi = choi_of_action(
        m.obj_dim(),
        [&](const cmat& x) { return selective_raw(m, corr, s, x); }, tol);
    branches.emplace_back(m.obj_dim(), kraus_from_choi(choi, kraus_threshold),
                          tol);
  }
  return Instrument(a, std::move(branches));
}

/// Max over outcome sets s of || E^B(s) - dual image of E^B(s) ||; the
/// measurement is nondisturbing for b iff this vanishes.
inline double nondisturbance_residual(const MeasurementModel& m,
                                      const Observable& b) {
  if (b.dim() != m.obj_dim()) {
    throw DimensionError("nondisturbance_check: observable dimension mismatch");
  }
  std::vector<cmat> defect;  // P_i - image(P_i), per singleton
  defect.reserve(b.projectors().size());
  for (const cmat& p : b.projectors()) {
    defect.push_back(p - heisenberg_image(m, p));
  }
  double residual = 0.0;
  for (const auto& idx : detail::index_subsets(b.n_outcomes())) {
    cmat sum = cmat::Zero(b.dim(), b.dim());
    for (int i : idx) sum += defect[static_cast<std::size_t>(i)];
    residual = std::max(residual, op_norm(sum));
  }
  return residual;
}

inline bool nondisturbance_check(const MeasurementModel& m, const Observable& b,
                                 const Tolerance& tol = {}) {
  return nondisturbance_residual(m, b) <= tol.eq_tol;
}

/// Nondisturbance with the object's free evolution taken into account
/// (hbar = 1): the nonselective change must reproduce the B statistics of
/// exp(-iH dt) rho exp(iH dt) for every rho and outcome set.
inline bool nondisturbance_with_evolution(const MeasurementModel& m,
                                          const Observable& b,
                                          const Observable& h, double dt,
                                          const Tolerance& tol = {}) {
  if (b.dim() != m.obj_dim() || h.dim() != m.obj_dim()) {
    throw DimensionError(
        "nondisturbance_with_evolution: observable dimension mismatch");
  }
  if (dt < 0.0) {
    throw PreconditionError("nondisturbance_with_evolution: dt must be >= 0");
  }
  cmat u_dt = cmat::Zero(h.dim(), h.dim());
  for (int i = 0; i < h.n_outcomes(); ++i) {
    const double lambda = h.spectrum()[static_cast<std::size_t>(i)];
    u_dt += std::exp(cplx(0.0, -lambda * dt)) *
            h.projectors()[static_cast<std::size_t>(i)];
  }
  double residual = 0.0;
  for (const DensityOperator& rho : spanning_density_set(m.obj_dim())) {
    const cmat evolved = u_dt * rho.matrix() * u_dt.adjoint();
    const cmat changed = nonselective_raw(m, rho.matrix());
    std::vector<double> per_singleton;
    per_singleton.reserve(b.projectors().size());
    for (const cmat& p : b.projectors()) {
      per_singleton.push_back((p * (evolved - changed)).trace().real());
    }
    for (const auto& idx : detail::index_subsets(b.n_outcomes())) {
      double gap = 0.0;
      for (int i : idx) gap += per_singleton[static_cast<std::size_t>(i)];
      residual = std::max(residual, std::abs(gap));
    }
  }
  return residual <= tol.eq_tol;
}

/// Probability that the model's outcome lies in s and an immediately
/// following B measurement lies in s2:
/// Tr[E^B(s2) Tr_A[(I (x) E) U (rho (x) sigma) U^dag (I (x) E)]].
inline double joint_prob_consecutive(const MeasurementModel& m,
                                     const OutcomeCorrespondence& corr,
                                     const OutcomeSet& s, const Observable& b,
                                     const OutcomeSet& s2,
                                     const DensityOperator& rho,
                                     const Tolerance& tol = {}) {
  if (b.dim() != m.obj_dim() || rho.dim() != m.obj_dim()) {
    throw DimensionError("joint_prob_consecutive: dimension mismatch");
  }
  if (!measures_observable_check(m, corr, 8, 0xB095C0DEull, tol)) {
    throw MeasurementError(
        "joint_prob_consecutive: model does not measure its declared observable");
  }
  const cmat x = selective_raw(m, corr, s, rho.matrix());
  const double p = (spectral_projector(b, s2) * x).trace().real();
  return std::clamp(p, 0.0, 1.0);
}

/// Numerical verdict on the nondisturbance theorem for one model/observable
/// pair: the duality criterion, the worst joint-probability defect against
/// the simultaneous-measurement formula, and the commutator norm, plus the
/// consistency flag the theorem demands between them.
struct Theorem1Report {
  bool nondisturbing = false;
  double nondisturbance_residual = 0.0;  // Heisenberg-dual criterion
  double joint_formula_residual = 0.0;   // consecutive vs Tr[E^A E^B rho]
  double commutator_norm = 0.0;
  bool consistent = false;
};

inline Theorem1Report theorem1_verify(const MeasurementModel& m,
                                      const OutcomeCorrespondence& corr,
                                      const Observable& b, int trials = 10,
                                      std::uint64_t seed = 0x7134711ull,
                                      const Tolerance& tol = {}) {
  if (b.dim() != m.obj_dim()) {
    throw DimensionError("theorem1_verify: observable dimension mismatch");
  }
  if (!measures_observable_check(m, corr, 8, 0xB095C0DEull, tol)) {
    throw MeasurementError(
        "theorem1_verify: model does not measure its declared observable");
  }
  Theorem1Report report;
  report.nondisturbance_residual = nondisturbance_residual(m, b);
  report.nondisturbing = report.nondisturbance_residual <= tol.eq_tol;

  std::vector<DensityOperator> states = spanning_density_set(m.obj_dim());
  Prng g(seed);
  for (int i = 0; i < trials; ++i) {
    states.push_back(random_density(m.obj_dim(), g));
  }
  const Observable& a = m.measured();
  const auto sets_a = a.all_outcome_sets();
  const auto sets_b = b.all_outcome_sets();
  const cmat i_obj = cmat::Identity(m.obj_dim(), m.obj_dim());
  for (const DensityOperator& rho : states) {
    const cmat big = detail::dilated_state(m, rho.matrix());
    for (const OutcomeSet& sa : sets_a) {
      const cmat e_meter = spectral_projector(m.meter(), corr.meter_set(sa));
      const cmat proj = tensor(i_obj, e_meter);
      const cmat collapsed =
          partial_trace_second(proj * big * proj, m.obj_dim(), m.anc_dim());
      const cmat e_a = spectral_projector(a, sa);
      for (const OutcomeSet& sb : sets_b) {
        const cmat e_b = spectral_projector(b, sb);
        const double consecutive = (e_b * collapsed).trace().real();
        const cplx formula = (e_a * e_b * rho.matrix()).trace();
        report.joint_formula_residual =
            std::max(report.joint_formula_residual,
                     std::abs(cplx(consecutive, 0.0) - formula));
      }
    }
  }
  report.commutator_norm = op_norm(a.op() * b.op() - b.op() * a.op());
  report.consistent =
      report.nondisturbing
          ? (report.joint_formula_residual <= tol.eq_tol &&
             report.commutator_norm <= tol.eq_tol)
          : report.joint_formula_residual > tol.eq_tol;
  return report;
}

/// For a pure ancilla sigma = |xi><xi|: max over outcome sets s of
/// || [U, E^B(s) (x) I] (psi (x) xi) ||. Vanishing on a basis of psi is
/// equivalent to nondisturbance of b.
inline double pure_ancilla_condition(const MeasurementModel& m,
                                     const Observable& b,
                                     const StateVector& psi,
                                     const Tolerance& tol = {}) {
  if (b.dim() != m.obj_dim() || psi.dim() != m.obj_dim()) {
    throw DimensionError("pure_ancilla_condition: dimension mismatch");
  }
  Eigen::SelfAdjointEigenSolver<cmat> solver(
      (m.sigma().matrix() + m.sigma().matrix().adjoint()) / 2.0);
  const Eigen::Index top = solver.eigenvalues().size() - 1;
  if (solver.eigenvalues()(top) < 1.0 - tol.eq_tol) {
    throw PreconditionError("pure_ancilla_condition: ancilla state is not pure");
  }
  const cvec xi = solver.eigenvectors().col(top);
  const cvec input = tensor(psi.amplitudes(), xi);
  const cmat i_anc = cmat::Identity(m.anc_dim(), m.anc_dim());
  std::vector<cvec> per_singleton;
  per_singleton.reserve(b.projectors().size());
  for (const cmat& p : b.projectors()) {
    const cmat embedded = tensor(p, i_anc);
    per_singleton.push_back(m.u() * (embedded * input) -
                            embedded * (m.u() * input));
  }
  double worst = 0.0;
  for (const auto& idx : detail::index_subsets(b.n_outcomes())) {
    cvec v = cvec::Zero(m.total_dim());
    for (int i : idx) v += per_singleton[static_cast<std::size_t>(i)];
    worst = std::max(worst, v.norm());
  }
  return worst;
}

/// Object split H1 (x) H2 used by the locality analysis.
struct Bipartition {
  int dim1;
  int dim2;
  Bipartition(int d1, int d2) : dim1(d1), dim2(d2) {
    if (d1 < 1 || d2 < 1) {
      throw DimensionError("Bipartition: dimensions must be >= 1");
    }
  }
};

enum class MeasuredFactor { first, second };

/// Worst commutator norm of U with the operators of the untouched factor
/// (matrix units suffice by linearity). measured = first checks
/// [U, I1 (x) X (x) I_A]; measured = second checks [U, X (x) I2 (x) I_A].
inline double locality_residual(const MeasurementModel& m,
                                const Bipartition& split,
                                MeasuredFactor measured = MeasuredFactor::first) {
  if (split.dim1 * split.dim2 != m.obj_dim()) {
    throw DimensionError("locality_check: bipartition does not match the object");
  }
  const cmat i_anc = cmat::Identity(m.anc_dim(), m.anc_dim());
  const int spectator = measured == MeasuredFactor::first ? split.dim2 : split.dim1;
  double residual = 0.0;
  for (int k = 0; k < spectator; ++k) {
    for (int l = 0; l < spectator; ++l) {
      const cmat unit = matrix_unit(spectator, k, l);
      const cmat embedded =
          measured == MeasuredFactor::first
              ? tensor(tensor(cmat::Identity(split.dim1, split.dim1), unit), i_anc)
              : tensor(tensor(unit, cmat::Identity(split.dim2, split.dim2)), i_anc);
      residual = std::max(residual, op_norm(m.u() * embedded - embedded * m.u()));
    }
  }
  return residual;
}

inline bool locality_check(const MeasurementModel& m, const Bipartition& split,
                           const Tolerance& tol = {},
                           MeasuredFactor measured = MeasuredFactor::first) {
  return locality_residual(m, split, measured) <= tol.eq_tol;
}

enum class MeasurementOrder { first_then_second, second_then_first };

/// Joint probability of a consecutive pair of local measurements, m1 on the
/// first factor and m2 on the second, applied in the given order. For local
/// instantaneous models this equals Tr[(E^C (x) E^D) rho] either way.
inline double joint_prob_local_pair(const MeasurementModel& m1,
                                    const OutcomeCorrespondence& c1,
                                    const MeasurementModel& m2,
                                    const OutcomeCorrespondence& c2,
                                    const Bipartition& split,
                                    const OutcomeSet& s, const OutcomeSet& s2,
                                    const DensityOperator& rho,
                                    MeasurementOrder order,
                                    const Tolerance& tol = {}) {
  if (m1.obj_dim() != m2.obj_dim() || rho.dim() != m1.obj_dim()) {
    throw DimensionError("joint_prob_local_pair: dimension mismatch");
  }
  if (!locality_check(m1, split, tol, MeasuredFactor::first)) {
    throw LocalityError("joint_prob_local_pair: first model is not local");
  }
  if (!locality_check(m2, split, tol, MeasuredFactor::second)) {
    throw LocalityError("joint_prob_local_pair: second model is not local");
  }
  if (!measures_observable_check(m1, c1, 8, 0xB095C0DEull, tol) ||
      !measures_observable_check(m2, c2, 8, 0xB095C0DEull, tol)) {
    throw MeasurementError(
        "joint_prob_local_pair: a model does not measure its declared observable");
  }
  cmat staged;
  double p = 0.0;
  if (order == MeasurementOrder::first_then_second) {
    staged = selective_raw(m1, c1, s, rho.matrix());
    p = selective_raw(m2, c2, s2, staged).trace().real();
  } else {
    staged = selective_raw(m2, c2, s2, rho.matrix());
    p = selective_raw(m1, c1, s, staged).trace().real();
  }
  return std::clamp(p, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Model builders
// ---------------------------------------------------------------------------

/// Pointer observable diag(0, 1, ..., dim-1).
inline Observable pointer_observable(int dim) {
  if (dim < 1) throw DimensionError("pointer_observable: dimension must be >= 1");
  cmat d = cmat::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) d(i, i) = cplx(static_cast<double>(i), 0.0);
  return Observable(std::move(d));
}

/// The canonical qubit fixture: object control, ancilla target, sigma = |0>,
/// U = CNOT, sz as both measured observable and meter. Induces the Lueders
/// instrument of sz.
inline ModelWithCorrespondence cnot_model() {
  Observable measured(pauli_z());
  Observable meter(pauli_z());
  MeasurementModel model(2, 2, DensityOperator::pure(basis_state(2, 0)), cnot(),
                         meter, measured);
  OutcomeCorrespondence corr = OutcomeCorrespondence::identity_map(measured, meter);
  return {std::move(model), std::move(corr)};
}

/// Swap the object into the ancilla and read the observable there: induces
/// the measure-and-reset (photon-counter-like) instrument.
inline ModelWithCorrespondence swap_model(const Observable& a) {
  const int d = a.dim();
  Observable meter(a.op());
  MeasurementModel model(d, d, DensityOperator::pure(basis_state(d, 0)),
                         swap_gate(d), meter, a);
  OutcomeCorrespondence corr = OutcomeCorrespondence::identity_map(a, meter);
  return {std::move(model), std::move(corr)};
}

/// Generalized-CNOT dilation U = sum_i E_i (x) shift^i with a pointer meter:
/// induces the Lueders instrument of a and commutes with every E^A(s) (x) I.
inline ModelWithCorrespondence luders_dilation_model(const Observable& a,
                                                     int anc_dim = 0) {
  const int k = a.n_outcomes();
  const int da = anc_dim == 0 ? k : anc_dim;
  if (da < k) {
    throw DimensionError("luders_dilation_model: ancilla too small for the spectrum");
  }
  cmat shift = cmat::Zero(da, da);
  for (int r = 0; r < da; ++r) shift((r + 1) % da, r) = cplx(1, 0);
  cmat u = cmat::Zero(static_cast<Eigen::Index>(a.dim()) * da,
                      static_cast<Eigen::Index>(a.dim()) * da);
  cmat power = cmat::Identity(da, da);
  for (int i = 0; i < k; ++i) {
    u += tensor(a.projectors()[static_cast<std::size_t>(i)], power);
    power = shift * power;
  }
  // complete the partition when the spectrum is smaller than the ancilla:
  // the remaining shift powers pair with nothing, U above is already unitary
  // because the projectors resolve the identity.
  Observable meter = pointer_observable(da);
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < k; ++i) {
    pairs.emplace_back(a.spectrum()[static_cast<std::size_t>(i)],
                       static_cast<double>(i));
  }
  MeasurementModel model(a.dim(), da, DensityOperator::pure(basis_state(da, 0)),
                         std::move(u), meter, a);
  OutcomeCorrespondence corr(a, meter, pairs);
  return {std::move(model), std::move(corr)};
}

/// Random observable with a prescribed number of distinct eigenvalues
/// (degenerate when n_outcomes < dim), eigenbasis Haar-distributed.
inline Observable random_observable_with_outcomes(int dim, int n_outcomes,
                                                  Prng& g) {
  if (dim < 1 || n_outcomes < 1 || n_outcomes > dim) {
    throw DimensionError("random_observable_with_outcomes: bad outcome count");
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_outcomes));
  for (int i = 0; i < n_outcomes; ++i) {
    values.push_back(static_cast<double>(i) + 0.4 * g.uniform());
  }
  cmat diag = cmat::Zero(dim, dim);
  for (int slot = 0; slot < dim; ++slot) {
    diag(slot, slot) = values[static_cast<std::size_t>(slot % n_outcomes)];
  }
  const cmat w = random_unitary(dim, g);
  cmat h = w * diag * w.adjoint();
  h = (h + h.adjoint()) / 2.0;
  return Observable(std::move(h));
}

inline Observable random_observable_with_outcomes(int dim, int n_outcomes,
                                                  std::uint64_t seed) {
  Prng g(seed);
  return random_observable_with_outcomes(dim, n_outcomes, g);
}

/// Random valid measurement model with a pure ancilla: the coupling sends
/// |phi>|0> to sum_a (V_a E_a |phi>) (x) |a> with Haar-random feedback
/// unitaries V_a, completed to a unitary on the orthogonal complement. The
/// induced instrument is rho -> V_a E_a rho E_a V_a^dag.
inline ModelWithCorrespondence random_model(int obj_dim, int anc_dim,
                                            std::uint64_t seed) {
  if (obj_dim < 1 || anc_dim < 2) {
    throw DimensionError("random_model: need obj_dim >= 1 and anc_dim >= 2");
  }
  Prng g(seed);
  const int k = std::min(obj_dim, anc_dim);
  Observable a = random_observable_with_outcomes(obj_dim, k, g);
  std::vector<cmat> feedback;
  feedback.reserve(static_cast<std::size_t>(a.n_outcomes()));
  for (int i = 0; i < a.n_outcomes(); ++i) {
    feedback.push_back(random_unitary(obj_dim, g));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(obj_dim) * anc_dim;
  cmat isometry(n, obj_dim);  // columns: U (|j> (x) |0>)
  for (int j = 0; j < obj_dim; ++j) {
    cvec col = cvec::Zero(n);
    for (int i = 0; i < a.n_outcomes(); ++i) {
      const cvec branch = feedback[static_cast<std::size_t>(i)] *
                          (a.projectors()[static_cast<std::size_t>(i)] *
                           basis_ket(obj_dim, j));
      col += tensor(branch, basis_ket(anc_dim, i));
    }
    isometry.col(j) = col;
  }
  Eigen::HouseholderQR<cmat> qr(isometry);
  const cmat q = qr.householderQ();
  const cmat rest = q.rightCols(n - obj_dim);  // orthonormal complement

  cmat u = cmat::Zero(n, n);
  Eigen::Index next_rest = 0;
  for (int j = 0; j < obj_dim; ++j) {
    u.col(static_cast<Eigen::Index>(j) * anc_dim) = isometry.col(j);
    for (int r = 1; r < anc_dim; ++r) {
      u.col(static_cast<Eigen::Index>(j) * anc_dim + r) = rest.col(next_rest++);
    }
  }

  Observable meter = pointer_observable(anc_dim);
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < a.n_outcomes(); ++i) {
    pairs.emplace_back(a.spectrum()[static_cast<std::size_t>(i)],
                       static_cast<double>(i));
  }
  MeasurementModel model(obj_dim, anc_dim,
                         DensityOperator::pure(basis_state(anc_dim, 0)),
                         std::move(u), meter, a);
  OutcomeCorrespondence corr(a, meter, pairs);
  return {std::move(model), std::move(corr)};
}

/// Embed a model acting on H1 into H1 (x) H2 (x) ancilla, leaving H2
/// untouched; the measured observable becomes C (x) I.
inline ModelWithCorrespondence embed_local_first(const ModelWithCorrespondence& mc,
                                                 int d2) {
  if (d2 < 1) throw DimensionError("embed_local_first: dimension must be >= 1");
  const MeasurementModel& m = mc.model;
  const int d1 = m.obj_dim();
  const int da = m.anc_dim();
  const Eigen::Index n = static_cast<Eigen::Index>(d1) * d2 * da;
  cmat u = cmat::Zero(n, n);
  for (int i1 = 0; i1 < d1; ++i1) {
    for (int j1 = 0; j1 < d1; ++j1) {
      for (int ia = 0; ia < da; ++ia) {
        for (int ja = 0; ja < da; ++ja) {
          const cplx entry = m.u()(static_cast<Eigen::Index>(i1) * da + ia,
                                   static_cast<Eigen::Index>(j1) * da + ja);
          if (entry == cplx(0.0, 0.0)) continue;
          for (int i2 = 0; i2 < d2; ++i2) {
            u((static_cast<Eigen::Index>(i1) * d2 + i2) * da + ia,
              (static_cast<Eigen::Index>(j1) * d2 + i2) * da + ja) = entry;
          }
        }
      }
    }
  }
  Observable measured(tensor(m.measured().op(), cmat::Identity(d2, d2)));
  MeasurementModel model(d1 * d2, da, m.sigma(), std::move(u), m.meter(),
                         measured);
  OutcomeCorrespondence corr(measured, m.meter(),
                             mc.corr.value_pairs(m.measured()));
  return {std::move(model), std::move(corr)};
}

/// Embed a model acting on H2 into H1 (x) H2 (x) ancilla, leaving H1
/// untouched; the measured observable becomes I (x) D.
inline ModelWithCorrespondence embed_local_second(const ModelWithCorrespondence& mc,
                                                  int d1) {
  if (d1 < 1) throw DimensionError("embed_local_second: dimension must be >= 1");
  const MeasurementModel& m = mc.model;
  const cmat u = tensor(cmat::Identity(d1, d1), m.u());
  Observable measured(tensor(cmat::Identity(d1, d1), m.measured().op()));
  MeasurementModel model(d1 * m.obj_dim(), m.anc_dim(), m.sigma(), u, m.meter(),
                         measured);
  OutcomeCorrespondence corr(measured, m.meter(),
                             mc.corr.value_pairs(m.measured()));
  return {std::move(model), std::move(corr)};
}

}  // namespace qmeas
