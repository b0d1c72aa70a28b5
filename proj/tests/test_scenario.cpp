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

#include <string>

#include "qmeas/scenario.hpp"

using namespace qmeas;

namespace {

std::string scenario_path(const std::string& name) {
  return std::string(QMEAS_SCENARIO_DIR) + "/" + name;
}

std::string data_path(const std::string& name) {
  return std::string(QMEAS_TEST_DATA_DIR) + "/" + name;
}

const CheckResult& find_result(const std::vector<CheckResult>& results,
                               const std::string& id) {
  for (const CheckResult& r : results) {
    if (r.id == id) return r;
  }
  FAIL("missing check id " + id);
  throw std::runtime_error("unreachable");
}

double residual_named(const CheckResult& r, const std::string& name) {
  for (const auto& [key, value] : r.residuals) {
    if (key == name) return value;
  }
  FAIL("missing residual " + name);
  return 0.0;
}

}  // namespace

TEST_CASE("load_scenario: minimal file loads and runs zero checks") {
  const Scenario s = load_scenario(data_path("minimal.json"));
  REQUIRE(s.name == "minimal");
  REQUIRE(s.checks.empty());
  const auto results = run_checks(s);
  REQUIRE(results.empty());
  REQUIRE(emit_report(s, results, ReportFormat::text).exit_code == 0);
}

TEST_CASE("load_scenario: rejects a non-unitary coupling, naming the model") {
  try {
    load_scenario(data_path("bad_unitary.json"));
    FAIL("expected ScenarioError");
  } catch (const ScenarioError& e) {
    REQUIRE(std::string(e.what()).find("broken") != std::string::npos);
  }
}

TEST_CASE("load_scenario: rejects unresolved references and bad shapes") {
  nlohmann::json doc = {
      {"name", "x"},
      {"object_dim", 2},
      {"observables", {{"sz", {{{1, 0}, {0, 0}}, {{0, 0}, {-1, 0}}}}}},
      {"checks",
       {{{"id", "c"}, {"kind", "nondisturbance"}, {"model", "nope"}, {"b", "sz"}}}}};
  REQUIRE_THROWS_AS(load_scenario_json(doc, "inline"), ScenarioError);

  nlohmann::json dup = doc;
  dup["checks"] = nlohmann::json::array();
  dup["observables"]["bad"] = {{{1, 0}}, {{0, 0}, {1, 0}}};  // ragged matrix
  REQUIRE_THROWS_AS(load_scenario_json(dup, "inline"), ScenarioError);
}

TEST_CASE("cnot_luders fixture: loads and every check passes") {
  const Scenario s = load_scenario(scenario_path("cnot_luders.json"));
  const auto results = run_checks(s);
  REQUIRE(results.size() == s.checks.size());
  for (const CheckResult& r : results) {
    INFO(r.id << ": " << r.details);
    REQUIRE(r.verdict == CheckResult::Verdict::pass);
  }
  // the disturbance counterexample is witnessed with a large residual
  const CheckResult& t1x = find_result(results, "t1_cnot_sx");
  REQUIRE(residual_named(t1x, "joint_formula_residual") >= 0.2);
  REQUIRE(emit_report(s, results, ReportFormat::text).exit_code == 0);
}

TEST_CASE("swap_counter and epr_singlet fixtures pass") {
  for (const char* name : {"swap_counter.json", "epr_singlet.json"}) {
    const Scenario s = load_scenario(scenario_path(name));
    const auto results = run_checks(s);
    for (const CheckResult& r : results) {
      INFO(s.name << "/" << r.id << ": " << r.details);
      REQUIRE(r.verdict == CheckResult::Verdict::pass);
    }
  }
}

TEST_CASE("theorem2_random fixture passes") {
  const Scenario s = load_scenario(scenario_path("theorem2_random.json"));
  const auto results = run_checks(s);
  for (const CheckResult& r : results) {
    REQUIRE(r.verdict == CheckResult::Verdict::pass);
  }
}

TEST_CASE("corrupted instrument fixture: dl fails, theorem2 is skipped") {
  const Scenario s = load_scenario(data_path("corrupted_instrument.json"));
  const auto results = run_checks(s);
  const CheckResult& dl = find_result(results, "dl_corrupted");
  REQUIRE(dl.verdict == CheckResult::Verdict::fail);
  REQUIRE(residual_named(dl, "reproducibility") >= 0.1);
  const CheckResult& t2 = find_result(results, "thm2_corrupted");
  REQUIRE(t2.verdict == CheckResult::Verdict::skipped);
  REQUIRE(t2.details.find("precondition") != std::string::npos);

  const EmitResult report = emit_report(s, results, ReportFormat::text);
  REQUIRE(report.exit_code == 1);
  // the failing id leads the summary footer
  REQUIRE(report.body.find("failed: dl_corrupted") != std::string::npos);
}

TEST_CASE("failing checks always expose a residual above tolerance") {
  // a wrong expectation fails with small measured residuals; the result must
  // still carry an offending entry
  Scenario s = load_scenario(scenario_path("cnot_luders.json"));
  nlohmann::json spec = {{"id", "wrong_expectation"},
                         {"kind", "nondisturbance"},
                         {"model", "cnot"},
                         {"b", "sz"},
                         {"expect", false}};
  s.checks.push_back({"wrong_expectation", "nondisturbance", spec});
  const auto results = run_checks(s);
  const CheckResult& r = find_result(results, "wrong_expectation");
  REQUIRE(r.verdict == CheckResult::Verdict::fail);
  REQUIRE(r.max_residual() > s.tol.eq_tol);
  REQUIRE(residual_named(r, "expectation_mismatch") == 1.0);
}

TEST_CASE("emit_report: structured output is byte-identical across runs") {
  const Scenario s = load_scenario(scenario_path("cnot_luders.json"));
  const auto first = emit_report(s, run_checks(s), ReportFormat::structured);
  const auto second = emit_report(s, run_checks(s), ReportFormat::structured);
  REQUIRE(first.body == second.body);
  REQUIRE_FALSE(first.body.empty());

  // the body is valid JSON mirroring the results
  const nlohmann::json parsed = nlohmann::json::parse(first.body);
  REQUIRE(parsed["scenario"] == "cnot_luders");
  REQUIRE(parsed["results"].size() == s.checks.size());
  REQUIRE(parsed["summary"]["fail"] == 0);

  // a different seed changes the document but stays self-consistent
  Scenario reseeded = load_scenario(scenario_path("cnot_luders.json"));
  reseeded.seed = 1;
  const auto third = emit_report(reseeded, run_checks(reseeded),
                                 ReportFormat::structured);
  REQUIRE(third.body != first.body);
}

TEST_CASE("sample_consecutive: deterministic outcomes and two-stage statistics") {
  auto [m, corr] = cnot_model();
  Observable sz(pauli_z());
  Observable sx(pauli_x());

  // eigenstate: all mass on (+1, +1)
  const EmpiricalJoint fixed = sample_consecutive(
      m, corr, sz, DensityOperator::pure(basis_state(2, 0)), 1000, 7);
  for (const auto& cell : fixed.cells) {
    if (cell.outcome_a == 1.0 && cell.outcome_b == 1.0) {
      REQUIRE(cell.count == 1000);
      REQUIRE(cell.expected == Approx(1.0));
      REQUIRE(cell.z == 0.0);
    } else {
      REQUIRE(cell.count == 0);
      REQUIRE(cell.z == 0.0);
    }
  }
  REQUIRE(fixed.within_z(4.0));

  // unbiased case: all four cells near 1/4
  const EmpiricalJoint spread = sample_consecutive(
      m, corr, sx, DensityOperator::pure(plus_state()), 100000, 20240817);
  REQUIRE(spread.cells.size() == 4);
  long long count_sum = 0;
  double expected_sum = 0.0;
  for (const auto& cell : spread.cells) {
    REQUIRE(cell.expected == Approx(0.25));
    REQUIRE(std::abs(cell.z) <= 4.0);
    count_sum += cell.count;
    expected_sum += cell.expected;
  }
  REQUIRE(count_sum == spread.total);
  REQUIRE(expected_sum == Approx(1.0).margin(1e-9));

  // n = 1 produces exactly one occupied cell
  const EmpiricalJoint single = sample_consecutive(
      m, corr, sx, DensityOperator::pure(plus_state()), 1, 5);
  long long total = 0;
  for (const auto& cell : single.cells) total += cell.count;
  REQUIRE(total == 1);

  REQUIRE_THROWS_AS(
      sample_consecutive(m, corr, sx, DensityOperator::pure(plus_state()), 0, 5),
      PreconditionError);
}

TEST_CASE("z_score conventions for deterministic cells") {
  REQUIRE(z_score(0, 100, 0.0) == 0.0);
  REQUIRE(std::isinf(z_score(3, 100, 0.0)));
  REQUIRE(z_score(100, 100, 1.0) == 0.0);
  REQUIRE(std::isinf(z_score(99, 100, 1.0)));
  REQUIRE(z_score(50, 100, 0.5) == Approx(0.0));
  REQUIRE(z_score(60, 100, 0.5) == Approx(2.0));
}

TEST_CASE("run_sampling: deterministic and honoring the n override") {
  const Scenario s = load_scenario(scenario_path("cnot_luders.json"));
  const auto a = run_sampling(s, 2000);
  const auto b = run_sampling(s, 2000);
  REQUIRE(a.size() == 2);
  REQUIRE(a[0].second.total == 2000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t c = 0; c < a[i].second.cells.size(); ++c) {
      REQUIRE(a[i].second.cells[c].count == b[i].second.cells[c].count);
    }
  }
  const auto report = emit_sample_report(s, a, ReportFormat::structured);
  REQUIRE(report.exit_code == 0);
  REQUIRE(emit_sample_report(s, run_sampling(s, 2000), ReportFormat::structured)
              .body == report.body);
}

TEST_CASE("statistical soundness: z-scores stay below 4 across seed variations") {
  auto [m, corr] = cnot_model();
  Observable sx(pauli_x());
  const DensityOperator plus_rho = DensityOperator::pure(plus_state());
  int good = 0;
  const int runs = 100;
  for (int k = 0; k < runs; ++k) {
    const EmpiricalJoint joint = sample_consecutive(
        m, corr, sx, plus_rho, 100000, Prng::derive(0xFEED, k));
    if (joint.within_z(4.0)) ++good;
  }
  REQUIRE(good >= 99);
}

TEST_CASE("epr_demo: exact correlations and the order invariance") {
  const double pi = 3.14159265358979323846;
  const EprReport report = epr_demo({0.0, pi / 3.0, pi / 2.0, pi}, 100000, 11);
  REQUIRE(report.items.size() == 4);

  const auto& t0 = report.items[0];
  REQUIRE(t0.exact_correlation == Approx(-1.0));
  for (const auto& cell : t0.cells) {
    if (cell.outcome_a == cell.outcome_b) {
      REQUIRE(cell.expected == Approx(0.0).margin(1e-12));
    } else {
      REQUIRE(cell.expected == Approx(0.5));
    }
  }

  const auto& t60 = report.items[1];
  REQUIRE(t60.exact_correlation == Approx(-0.5));

  const auto& t90 = report.items[2];
  REQUIRE(t90.exact_correlation == Approx(0.0).margin(1e-12));
  for (const auto& cell : t90.cells) {
    REQUIRE(cell.expected == Approx(0.25));
  }

  for (const auto& item : report.items) {
    REQUIRE(item.formula_residual <= 1e-10);
    REQUIRE(item.order_residual <= 1e-10);
    REQUIRE(std::abs(item.exact_correlation - item.analytic_correlation) <= 1e-9);
    REQUIRE_FALSE(std::isinf(item.correlation_z));
    REQUIRE(std::abs(item.correlation_z) <= 4.0);
  }

  const auto rendered = emit_epr_report(report, ReportFormat::structured);
  REQUIRE(rendered.exit_code == 0);
  REQUIRE(emit_epr_report(epr_demo({0.0, pi / 3.0, pi / 2.0, pi}, 100000, 11),
                          ReportFormat::structured)
              .body == rendered.body);
}
