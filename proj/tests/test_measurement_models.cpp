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

#include <catch2/catch.hpp>

#include "qmeas/measurement_models.hpp"

using namespace qmeas;

namespace {

cmat ket_proj(int dim, int i) {
  return basis_ket(dim, i) * basis_ket(dim, i).adjoint();
}

// hand-rolled Kronecker product, independent of the library implementation
cmat kron_oracle(const cmat& a, const cmat& b) {
  cmat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      for (int k = 0; k < b.rows(); ++k)
        for (int l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

cmat partial_trace_oracle(const cmat& x, int d1, int d2) {
  cmat out = cmat::Zero(d1, d1);
  for (int i = 0; i < d1; ++i)
    for (int j = 0; j < d1; ++j)
      for (int k = 0; k < d2; ++k)
        out(i, j) += x(i * d2 + k, j * d2 + k);
  return out;
}

cmat hand_cnot() {
  cmat u = cmat::Zero(4, 4);
  u(0, 0) = u(1, 1) = u(2, 3) = u(3, 2) = 1.0;
  return u;
}

/// Observable that is a random function of a: same projectors, values drawn
/// from a small set (so eigenspaces may merge).
Observable random_function_of(const Observable& a, Prng& g) {
  cmat op = cmat::Zero(a.dim(), a.dim());
  for (int i = 0; i < a.n_outcomes(); ++i) {
    op += static_cast<double>(g.next_u64() % 3) *
          a.projectors()[static_cast<std::size_t>(i)];
  }
  return Observable((op + op.adjoint()) / 2.0);
}

}  // namespace

TEST_CASE("nonselective_change: CNOT fixtures against a direct 4x4 oracle") {
  auto [m, corr] = cnot_model();

  const DensityOperator zero = DensityOperator::pure(basis_state(2, 0));
  REQUIRE(op_norm(nonselective_change(m, zero).matrix() - zero.matrix()) < 1e-12);

  // oracle: U (|+><+| (x) |0><0|) U^dag traced over the ancilla, by hand
  const DensityOperator plus_rho = DensityOperator::pure(plus_state());
  const cmat dilated = hand_cnot() *
                       kron_oracle(plus_rho.matrix(), ket_proj(2, 0)) *
                       hand_cnot().adjoint();
  const cmat oracle = partial_trace_oracle(dilated, 2, 2);
  REQUIRE(op_norm(oracle - cmat::Identity(2, 2) / 2.0) < 1e-12);
  REQUIRE(op_norm(nonselective_change(m, plus_rho).matrix() - oracle) < 1e-12);
}

TEST_CASE("nonselective_change: identity coupling changes nothing") {
  Observable meter = pointer_observable(2);
  Observable measured(0.7 * cmat::Identity(2, 2));
  MeasurementModel trivial(2, 2, DensityOperator::pure(basis_state(2, 0)),
                           cmat::Identity(4, 4), meter, measured);
  Prng g(15);
  for (int rep = 0; rep < 5; ++rep) {
    const DensityOperator rho = random_density(2, g);
    REQUIRE(op_norm(nonselective_change(trivial, rho).matrix() - rho.matrix()) <
            1e-12);
  }
}

TEST_CASE("heisenberg_image: unitality and the CNOT conjugation oracle") {
  auto [m, corr] = cnot_model();
  REQUIRE(op_norm(heisenberg_image(m, cmat::Identity(2, 2)) -
                  cmat::Identity(2, 2)) < 1e-12);

  // oracle: U^dag (sz (x) I) U = sz (x) I, then project the ancilla on |0>
  const cmat conj_z = hand_cnot().adjoint() *
                      kron_oracle(pauli_z(), cmat::Identity(2, 2)) * hand_cnot();
  REQUIRE(op_norm(conj_z - kron_oracle(pauli_z(), cmat::Identity(2, 2))) < 1e-12);
  REQUIRE(op_norm(heisenberg_image(m, pauli_z()) - pauli_z()) < 1e-12);

  // oracle: U^dag (sx (x) I) U = sx (x) sx, whose |0><0| ancilla average is 0
  const cmat conj_x = hand_cnot().adjoint() *
                      kron_oracle(pauli_x(), cmat::Identity(2, 2)) * hand_cnot();
  REQUIRE(op_norm(conj_x - kron_oracle(pauli_x(), pauli_x())) < 1e-12);
  REQUIRE(op_norm(heisenberg_image(m, pauli_x())) < 1e-12);
}

TEST_CASE("heisenberg_image is the trace dual of the nonselective change") {
  Prng g(1001);
  for (int rep = 0; rep < 6; ++rep) {
    // arbitrary models, mixed ancilla states included; validity is irrelevant
    const int obj = 2 + static_cast<int>(g.next_u64() % 2);
    const int anc = 2 + static_cast<int>(g.next_u64() % 2);
    MeasurementModel m(obj, anc, random_density(anc, g),
                       random_unitary(obj * anc, g),
                       Observable(random_hermitian(anc, g)),
                       Observable(random_hermitian(obj, g)));
    const cmat x = random_hermitian(obj, g);
    const DensityOperator rho = random_density(obj, g);
    const double lhs = (heisenberg_image(m, x) * rho.matrix()).trace().real();
    const double rhs = (x * nonselective_raw(m, rho.matrix())).trace().real();
    REQUIRE(std::abs(lhs - rhs) < 1e-10);
    REQUIRE(op_norm(heisenberg_image(m, cmat::Identity(obj, obj)) -
                    cmat::Identity(obj, obj)) < 1e-10);
  }
}

TEST_CASE("measures_observable_check: correspondence orientation matters") {
  auto [m, corr] = cnot_model();
  REQUIRE(measures_observable_check(m, corr));

  const OutcomeCorrespondence swapped(m.measured(), m.meter(),
                                      {{1.0, -1.0}, {-1.0, 1.0}});
  REQUIRE_FALSE(measures_observable_check(m, swapped));

  // single-outcome observable: every unitary measures it
  Observable scalar(0.7 * cmat::Identity(2, 2));
  Observable meter = pointer_observable(2);
  MeasurementModel trivial(2, 2, DensityOperator::pure(basis_state(2, 0)),
                           cmat::Identity(4, 4), meter, scalar);
  const OutcomeCorrespondence to_zero(scalar, meter, {{0.7, 0.0}});
  REQUIRE(measures_observable_check(trivial, to_zero));
}

TEST_CASE("induced_instrument: CNOT induces the Lueders instrument of sz") {
  auto [m, corr] = cnot_model();
  const Instrument induced = induced_instrument(m, corr);
  const Instrument lud = luders_instrument(m.measured());
  for (std::size_t i = 0; i < induced.branches().size(); ++i) {
    const double dist = op_norm(choi_matrix(induced.branches()[i]).matrix() -
                                choi_matrix(lud.branches()[i]).matrix());
    REQUIRE(dist < 1e-10);
  }
}

TEST_CASE("induced_instrument: swap model induces measure-and-reset") {
  Observable sz(pauli_z());
  auto [m, corr] = swap_model(sz);
  const Instrument induced = induced_instrument(m, corr);
  const Instrument fixture = measure_and_reset_instrument(sz);
  for (std::size_t i = 0; i < induced.branches().size(); ++i) {
    REQUIRE(op_norm(choi_matrix(induced.branches()[i]).matrix() -
                    choi_matrix(fixture.branches()[i]).matrix()) < 1e-10);
  }
  // and the fixture is genuinely non-Lueders
  const Instrument lud = luders_instrument(sz);
  REQUIRE(op_norm(choi_matrix(fixture.branches()[0]).matrix() -
                  choi_matrix(lud.branches()[0]).matrix()) > 0.5);
}

TEST_CASE("induced_instrument: rejects models that do not measure their observable") {
  Observable sz(pauli_z());
  Observable meter(pauli_z());
  MeasurementModel lazy(2, 2, DensityOperator::pure(basis_state(2, 0)),
                        cmat::Identity(4, 4), meter, sz);
  const OutcomeCorrespondence corr = OutcomeCorrespondence::identity_map(sz, meter);
  REQUIRE_THROWS_AS(induced_instrument(lazy, corr), MeasurementError);
}

TEST_CASE("nondisturbance_check: CNOT preserves sz statistics, destroys sx") {
  auto [m, corr] = cnot_model();
  Observable sx(pauli_x());
  REQUIRE(nondisturbance_check(m, m.measured()));
  REQUIRE_FALSE(nondisturbance_check(m, sx));
  // image of (I+sx)/2 is I/2, so the defect norm is exactly 1/2
  REQUIRE(nondisturbance_residual(m, sx) == Approx(0.5));

  // trivial observable: its projectors are 0 and I, both always fixed
  Observable scalar(0.7 * cmat::Identity(2, 2));
  REQUIRE(nondisturbance_check(m, scalar));
  auto [swap_m, swap_corr] = swap_model(Observable(pauli_z()));
  REQUIRE(nondisturbance_check(swap_m, scalar));
  REQUIRE_FALSE(nondisturbance_check(swap_m, Observable(pauli_z())));
}

TEST_CASE("commuting couplings cannot disturb (sufficient condition)") {
  Prng g(2002);
  for (int rep = 0; rep < 5; ++rep) {
    Observable a = random_observable_with_outcomes(3, 3, g);
    auto mc = luders_dilation_model(a);
    Observable b = random_function_of(a, g);
    // the coupling commutes with every E^B(s) (x) I ...
    const cmat i_anc = cmat::Identity(mc.model.anc_dim(), mc.model.anc_dim());
    for (const OutcomeSet& s : b.all_outcome_sets()) {
      const cmat e = tensor(spectral_projector(b, s), i_anc);
      REQUIRE(op_norm(mc.model.u() * e - e * mc.model.u()) < 1e-10);
    }
    // ... so the measurement does not disturb b
    REQUIRE(nondisturbance_check(mc.model, b));
  }
}

TEST_CASE("nondisturbance_with_evolution: dt = 0 reduces to the instantaneous check") {
  auto [m, corr] = cnot_model();
  Observable sz(pauli_z());
  Observable sx(pauli_x());
  REQUIRE(nondisturbance_with_evolution(m, sz, sz, 0.0));
  REQUIRE_FALSE(nondisturbance_with_evolution(m, sx, sz, 0.0));
}

TEST_CASE("nondisturbance_with_evolution agrees with the instantaneous check at dt=0") {
  Prng seeds(61803);
  for (int rep = 0; rep < 4; ++rep) {
    auto mc = random_model(2 + rep % 2, 2, seeds.next_u64());
    Prng g(seeds.next_u64());
    Observable b(random_hermitian(mc.model.obj_dim(), g));
    Observable h(random_hermitian(mc.model.obj_dim(), g));
    REQUIRE(nondisturbance_with_evolution(mc.model, b, h, 0.0) ==
            nondisturbance_check(mc.model, b));
  }
}

TEST_CASE("nondisturbance_with_evolution: free evolution vs dephasing") {
  auto [m, corr] = cnot_model();
  Observable sz(pauli_z());
  Observable sx(pauli_x());
  // z-rotations commute with the z-dephasing statistics
  for (double dt : {0.1, 0.7854, 2.0}) {
    REQUIRE(nondisturbance_with_evolution(m, sz, sz, dt));
  }
  // an x-Hamiltonian rotates the z statistics; the nonselective map does not
  REQUIRE_FALSE(nondisturbance_with_evolution(m, sz, sx, 0.7853981633974483));
  REQUIRE_THROWS_AS(nondisturbance_with_evolution(m, sz, sx, -1.0),
                    PreconditionError);
}

TEST_CASE("joint_prob_consecutive: CNOT repeatability and unbiased sx split") {
  auto [m, corr] = cnot_model();
  Observable sz(pauli_z());
  Observable sx(pauli_x());
  const DensityOperator plus_rho = DensityOperator::pure(plus_state());
  const Observable& a = m.measured();

  REQUIRE(joint_prob_consecutive(m, corr, a.set_of_values({1.0}), sz,
                                 sz.set_of_values({1.0}), plus_rho) ==
          Approx(0.5));
  REQUIRE(joint_prob_consecutive(m, corr, a.set_of_values({1.0}), sz,
                                 sz.set_of_values({-1.0}), plus_rho) ==
          Approx(0.0).margin(1e-12));

  for (double av : {-1.0, 1.0}) {
    for (double bv : {-1.0, 1.0}) {
      REQUIRE(joint_prob_consecutive(m, corr, a.set_of_values({av}), sx,
                                     sx.set_of_values({bv}), plus_rho) ==
              Approx(0.25));
    }
  }

  // marginal over the first outcome reproduces Born in the changed state
  Prng g(77);
  const DensityOperator rho = random_density(2, g);
  const double marginal = joint_prob_consecutive(
      m, corr, a.full_set(), sx, sx.set_of_values({1.0}), rho);
  const double born_after = born_probability(sx, sx.set_of_values({1.0}),
                                             nonselective_change(m, rho));
  REQUIRE(marginal == Approx(born_after).margin(1e-12));

  // marginal over the second outcome reproduces Born for the first
  const double first_marginal = joint_prob_consecutive(
      m, corr, a.set_of_values({1.0}), sx, sx.full_set(), rho);
  REQUIRE(first_marginal ==
          Approx(born_probability(a, a.set_of_values({1.0}), rho)).margin(1e-12));
}

TEST_CASE("theorem1_verify: CNOT with b = sz is a simultaneous measurement") {
  auto [m, corr] = cnot_model();
  const Theorem1Report report = theorem1_verify(m, corr, m.measured());
  REQUIRE(report.nondisturbing);
  REQUIRE(report.joint_formula_residual <= 1e-10);
  REQUIRE(report.commutator_norm <= 1e-12);
  REQUIRE(report.consistent);
}

TEST_CASE("theorem1_verify: CNOT with b = sx violates the joint formula") {
  auto [m, corr] = cnot_model();
  Observable sx(pauli_x());
  const Theorem1Report report = theorem1_verify(m, corr, sx);
  REQUIRE_FALSE(report.nondisturbing);
  REQUIRE(report.consistent);
  REQUIRE(report.joint_formula_residual >= 0.2);

  // oracle for the specific counterexample instance rho = |+><+|,
  // s = {+1}, s' = {+1}: project the dilated vector by hand.
  cvec in = tensor(plus_state().amplitudes(), basis_ket(2, 0));
  cvec evolved = hand_cnot() * in;
  cvec metered = kron_oracle(cmat::Identity(2, 2), ket_proj(2, 0)) * evolved;
  const cmat e_x_plus = (cmat::Identity(2, 2) + pauli_x()) / 2.0;
  const double consecutive =
      (metered.adjoint() * kron_oracle(e_x_plus, cmat::Identity(2, 2)) * metered)(0)
          .real();
  REQUIRE(consecutive == Approx(0.25));
  const cvec plus = plus_state().amplitudes();
  const double formula =
      (plus.adjoint() * ket_proj(2, 0) * e_x_plus * plus)(0).real();
  REQUIRE(formula == Approx(0.5));
  REQUIRE(std::abs(consecutive - formula) >= 0.2);

  const DensityOperator plus_rho = DensityOperator::pure(plus_state());
  const double lib_consecutive = joint_prob_consecutive(
      m, corr, m.measured().set_of_values({1.0}), sx, sx.set_of_values({1.0}),
      plus_rho);
  REQUIRE(lib_consecutive == Approx(consecutive));
}

TEST_CASE("theorem1: forward and converse directions over random models") {
  Prng seeds(424242);
  int nondisturbing_seen = 0;
  int disturbing_seen = 0;
  int model_count = 0;
  const Tolerance flag_tol(1e-9, 1e-8);

  for (int obj_dim : {2, 3, 4}) {
    for (int anc_dim : {2, 3}) {
      for (int rep = 0; rep < 3; ++rep) {
        ++model_count;
        const std::uint64_t seed = seeds.next_u64();
        const int variant = model_count % 3;

        ModelWithCorrespondence mc =
            variant == 0
                ? luders_dilation_model(
                      random_observable_with_outcomes(
                          obj_dim, std::min(obj_dim, anc_dim), seed),
                      anc_dim)
                : random_model(obj_dim, anc_dim, seed);
        Prng g(seed ^ 0xABCDull);
        Observable b = variant == 2 ? Observable(random_hermitian(obj_dim, g))
                                    : random_function_of(mc.model.measured(), g);

        const Theorem1Report report =
            theorem1_verify(mc.model, mc.corr, b, 6, seed, flag_tol);
        REQUIRE(report.consistent);
        if (report.nondisturbing) {
          ++nondisturbing_seen;
          REQUIRE(report.joint_formula_residual <= 1e-8);
          REQUIRE(report.commutator_norm <= 1e-8);
        } else {
          ++disturbing_seen;
          REQUIRE(report.joint_formula_residual > 1e-9);
        }
        // converse: spanning-set agreement with the joint formula implies
        // the Heisenberg-dual criterion
        if (report.joint_formula_residual <= 1e-10) {
          REQUIRE(report.nondisturbance_residual <= 1e-9);
        }
      }
    }
  }
  REQUIRE(model_count >= 18);
  REQUIRE(nondisturbing_seen >= 5);
  REQUIRE(disturbing_seen >= 5);
}

TEST_CASE("theorem1: local measurements never disturb the other subsystem") {
  Prng g(5150);
  auto mc = embed_local_first(
      luders_dilation_model(Observable(pauli_z())), 2);
  Observable b(tensor(cmat::Identity(2, 2), random_hermitian(2, g)));
  const Theorem1Report report = theorem1_verify(mc.model, mc.corr, b);
  REQUIRE(report.nondisturbing);
  REQUIRE(report.joint_formula_residual <= 1e-10);
  REQUIRE(report.commutator_norm <= 1e-12);
}

TEST_CASE("pure_ancilla_condition: CNOT commutator norms, exact values") {
  auto [m, corr] = cnot_model();
  Observable sz(pauli_z());
  Observable sx(pauli_x());

  for (int i : {0, 1}) {
    REQUIRE(pure_ancilla_condition(m, sz, basis_state(2, i)) < 1e-12);
  }
  REQUIRE(pure_ancilla_condition(m, sz, plus_state()) < 1e-12);

  // oracle: || [CNOT, (I+sx)/2 (x) I] |00> || = 1/sqrt(2), by direct vectors
  const cmat p = kron_oracle((cmat::Identity(2, 2) + pauli_x()) / 2.0,
                             cmat::Identity(2, 2));
  const cvec v00 = tensor(basis_ket(2, 0), basis_ket(2, 0));
  const double oracle = (hand_cnot() * p * v00 - p * hand_cnot() * v00).norm();
  REQUIRE(oracle == Approx(1.0 / std::sqrt(2.0)));
  REQUIRE(pure_ancilla_condition(m, sx, basis_state(2, 0)) == Approx(oracle));

  // identity coupling commutes with everything
  Observable meter = pointer_observable(2);
  Observable scalar(0.7 * cmat::Identity(2, 2));
  MeasurementModel trivial(2, 2, DensityOperator::pure(basis_state(2, 0)),
                           cmat::Identity(4, 4), meter, scalar);
  REQUIRE(pure_ancilla_condition(trivial, sx, plus_state()) < 1e-14);

  // mixed ancilla states are rejected
  MeasurementModel mixed(2, 2, DensityOperator::maximally_mixed(2), cnot(),
                         Observable(pauli_z()), Observable(pauli_z()));
  REQUIRE_THROWS_AS(pure_ancilla_condition(mixed, sz, plus_state()),
                    PreconditionError);
}

TEST_CASE("pure_ancilla_condition is equivalent to nondisturbance for pure sigma") {
  Prng seeds(31007);
  const Tolerance flag_tol(1e-9, 1e-8);
  int checked = 0;
  for (int rep = 0; rep < 8; ++rep) {
    const int obj_dim = 2 + static_cast<int>(seeds.next_u64() % 3);
    const int anc_dim = 2 + static_cast<int>(seeds.next_u64() % 2);
    auto mc = random_model(obj_dim, anc_dim, seeds.next_u64());
    Prng g(seeds.next_u64());
    for (int which = 0; which < 2; ++which) {
      Observable b = which == 0 ? random_function_of(mc.model.measured(), g)
                                : Observable(random_hermitian(obj_dim, g));
      double worst = 0.0;
      for (int i = 0; i < obj_dim; ++i) {
        worst = std::max(worst, pure_ancilla_condition(mc.model, b,
                                                       basis_state(obj_dim, i)));
      }
      const bool vanishing = worst <= 1e-9;
      REQUIRE(vanishing == nondisturbance_check(mc.model, b, flag_tol));
      ++checked;
    }
  }
  REQUIRE(checked == 16);
}

TEST_CASE("locality_check: embedded couplings and their violations") {
  const Bipartition split(2, 2);
  auto m1 = embed_local_first(cnot_model(), 2);
  REQUIRE(locality_check(m1.model, split, {}, MeasuredFactor::first));
  REQUIRE(measures_observable_check(m1.model, m1.corr));

  auto m2 = embed_local_second(cnot_model(), 2);
  REQUIRE(locality_check(m2.model, split, {}, MeasuredFactor::second));
  // the same coupling declared as a first-factor measurement is nonlocal
  REQUIRE_FALSE(locality_check(m2.model, split, {}, MeasuredFactor::first));

  // a coupling that swaps H1 and H2 moves both subsystems
  Observable z1(tensor(pauli_z(), cmat::Identity(2, 2)));
  MeasurementModel shuffler(4, 2, DensityOperator::pure(basis_state(2, 0)),
                            tensor(swap_gate(2), cmat::Identity(2, 2)),
                            Observable(pauli_z()), z1);
  REQUIRE_FALSE(locality_check(shuffler, split, {}, MeasuredFactor::first));
  REQUIRE_FALSE(locality_check(shuffler, split, {}, MeasuredFactor::second));

  REQUIRE_THROWS_AS(locality_check(m1.model, Bipartition(3, 2)), DimensionError);
}

TEST_CASE("joint_prob_local_pair: singlet statistics, both orders") {
  auto m1 = embed_local_first(luders_dilation_model(Observable(pauli_z())), 2);
  auto m2 = embed_local_second(luders_dilation_model(Observable(pauli_z())), 2);
  const Bipartition split(2, 2);
  const DensityOperator singlet = DensityOperator::pure(singlet_state());

  // oracle: explicit 4x4 singlet matrix against hand-built projectors
  const cmat rho = singlet.matrix();
  const cmat e_pp = kron_oracle(ket_proj(2, 0), ket_proj(2, 0));
  const cmat e_pm = kron_oracle(ket_proj(2, 0), ket_proj(2, 1));
  REQUIRE((e_pp * rho).trace().real() == Approx(0.0).margin(1e-14));
  REQUIRE((e_pm * rho).trace().real() == Approx(0.5));

  const OutcomeSet s_plus = m1.model.measured().set_of_values({1.0});
  const OutcomeSet s2_plus = m2.model.measured().set_of_values({1.0});
  const OutcomeSet s2_minus = m2.model.measured().set_of_values({-1.0});
  for (MeasurementOrder order : {MeasurementOrder::first_then_second,
                                 MeasurementOrder::second_then_first}) {
    REQUIRE(joint_prob_local_pair(m1.model, m1.corr, m2.model, m2.corr, split,
                                  s_plus, s2_plus, singlet, order) ==
            Approx(0.0).margin(1e-12));
    REQUIRE(joint_prob_local_pair(m1.model, m1.corr, m2.model, m2.corr, split,
                                  s_plus, s2_minus, singlet, order) ==
            Approx(0.5));
  }

  // product states factorize
  Prng g(606);
  const DensityOperator rho1 = random_density(2, g);
  const DensityOperator rho2 = random_density(2, g);
  const DensityOperator product(tensor(rho1.matrix(), rho2.matrix()));
  Observable c(pauli_z());
  const double joint = joint_prob_local_pair(
      m1.model, m1.corr, m2.model, m2.corr, split, s_plus, s2_minus, product,
      MeasurementOrder::first_then_second);
  const double factored = born_probability(c, c.set_of_values({1.0}), rho1) *
                          born_probability(c, c.set_of_values({-1.0}), rho2);
  REQUIRE(joint == Approx(factored).margin(1e-12));

  // marginal over the full second set
  const double marginal = joint_prob_local_pair(
      m1.model, m1.corr, m2.model, m2.corr, split, s_plus,
      m2.model.measured().full_set(), singlet,
      MeasurementOrder::first_then_second);
  REQUIRE(marginal ==
          Approx(born_probability(m1.model.measured(), s_plus, singlet)));

  // nonlocal first model is refused
  Observable z1(tensor(pauli_z(), cmat::Identity(2, 2)));
  MeasurementModel shuffler(4, 2, DensityOperator::pure(basis_state(2, 0)),
                            tensor(swap_gate(2), cmat::Identity(2, 2)),
                            Observable(pauli_z()), z1);
  const OutcomeCorrespondence shuffler_corr =
      OutcomeCorrespondence::identity_map(z1, shuffler.meter());
  REQUIRE_THROWS_AS(
      joint_prob_local_pair(shuffler, shuffler_corr, m2.model, m2.corr, split,
                            z1.set_of_values({1.0}), s2_plus, singlet,
                            MeasurementOrder::first_then_second),
      LocalityError);
}

TEST_CASE("induced instruments of valid models satisfy the whole axiom stack") {
  Prng seeds(808);
  std::vector<ModelWithCorrespondence> models;
  models.push_back(cnot_model());
  models.push_back(swap_model(Observable(pauli_z())));
  for (int rep = 0; rep < 4; ++rep) {
    models.push_back(random_model(2 + rep % 3, 2 + rep % 2, seeds.next_u64()));
  }
  const Tolerance tight(1e-10, 1e-8);
  for (const auto& mc : models) {
    const Instrument inst = induced_instrument(mc.model, mc.corr);
    REQUIRE(dl_axioms_check(inst, tight).pass());
    const Theorem2Report t2 = theorem2_check(inst, tight, 10, seeds.next_u64());
    REQUIRE(t2.precondition_ok);
    REQUIRE(t2.pass);
    for (const CPMap& branch : inst.branches()) {
      REQUIRE(cp_check(branch, tight));
    }
    REQUIRE(inst.total_residual() < 1e-9);
  }
}

TEST_CASE("selective state changes: the three dilation expressions coincide") {
  Prng seeds(909);
  for (int rep = 0; rep < 4; ++rep) {
    auto mc = random_model(2 + rep % 2, 2, seeds.next_u64());
    const MeasurementModel& m = mc.model;
    Prng g(seeds.next_u64());
    const DensityOperator rho = random_density(m.obj_dim(), g);
    const Observable& a = m.measured();
    const cmat i_anc = cmat::Identity(m.anc_dim(), m.anc_dim());
    for (const OutcomeSet& s : a.all_outcome_sets()) {
      const cmat e = spectral_projector(a, s);
      auto dilate = [&](const cmat& x) {
        return partial_trace_second(
            m.u() * tensor(x, m.sigma().matrix()) * m.u().adjoint(),
            m.obj_dim(), m.anc_dim());
      };
      const cmat via_right = dilate(rho.matrix() * e);
      const cmat via_left = dilate(e * rho.matrix());
      const cmat via_both = dilate(e * rho.matrix() * e);
      const cmat direct = selective_raw(m, mc.corr, s, rho.matrix());
      REQUIRE(op_norm(via_right - via_left) < 1e-10);
      REQUIRE(op_norm(via_right - via_both) < 1e-10);
      REQUIRE(op_norm(direct - via_both) < 1e-10);
    }
  }
}

TEST_CASE("MeasurementModel and OutcomeCorrespondence validation") {
  Observable sz(pauli_z());
  Observable meter(pauli_z());
  const DensityOperator anc0 = DensityOperator::pure(basis_state(2, 0));

  cmat not_unitary = cmat::Identity(4, 4);
  not_unitary(2, 2) = 0.5;
  REQUIRE_THROWS_AS(MeasurementModel(2, 2, anc0, not_unitary, meter, sz),
                    OperatorError);
  REQUIRE_THROWS_AS(MeasurementModel(2, 3, anc0, cnot(), meter, sz),
                    DimensionError);

  REQUIRE_THROWS_AS(OutcomeCorrespondence(sz, meter, {{1.0, 1.0}}),
                    PreconditionError);  // -1 unmapped
  REQUIRE_THROWS_AS(OutcomeCorrespondence(sz, meter, {{1.0, 1.0}, {-1.0, 1.0}}),
                    PreconditionError);  // not injective
  const OutcomeCorrespondence ok =
      OutcomeCorrespondence::identity_map(sz, meter);
  auto [m, corr] = cnot_model();
  REQUIRE_THROWS_AS(selective_raw(m, ok, sz.full_set(), cmat::Identity(2, 2)),
                    OwnershipError);  // corr built for foreign observables
}

TEST_CASE("induced total map equals the nonselective change, padded meter too") {
  // ancilla larger than the spectrum: the unmatched pointer outcomes carry
  // no weight, so the branch sum still reproduces Tr_A[U(x (x) sigma) U^dag]
  auto mc = luders_dilation_model(Observable(pauli_z()), 3);
  REQUIRE(mc.model.anc_dim() == 3);
  REQUIRE(mc.corr.unmatched_meter_indices().size() == 1);
  REQUIRE(measures_observable_check(mc.model, mc.corr));
  const Instrument induced = induced_instrument(mc.model, mc.corr);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const cmat x = matrix_unit(2, i, j);
      REQUIRE(op_norm(induced.apply_total(x) - nonselective_raw(mc.model, x)) <
              1e-10);
    }
  }
}

TEST_CASE("embedded models keep spectra and stay unitary") {
  auto base = luders_dilation_model(Observable(pauli_z()));
  auto first = embed_local_first(base, 3);
  auto second = embed_local_second(base, 3);
  REQUIRE(first.model.obj_dim() == 6);
  REQUIRE(second.model.obj_dim() == 6);
  REQUIRE(first.model.measured().spectrum() == std::vector<double>{-1.0, 1.0});
  REQUIRE(second.model.measured().spectrum() == std::vector<double>{-1.0, 1.0});
  REQUIRE(measures_observable_check(first.model, first.corr));
  REQUIRE(measures_observable_check(second.model, second.corr));
}
