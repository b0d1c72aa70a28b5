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

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qmeas/qmeas.hpp"

namespace {

qmeas::ReportFormat parse_format(const std::string& format) {
  return format == "structured" ? qmeas::ReportFormat::structured
                                : qmeas::ReportFormat::text;
}

void apply_overrides(qmeas::Scenario& scenario, bool seed_set,
                     std::uint64_t seed, double tol) {
  if (seed_set) scenario.seed = seed;
  if (tol > 0.0) {
    scenario.tol = qmeas::Tolerance(tol, scenario.tol.eig_cluster_tol);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qmeas: verify quantum measurement scenarios"};
  app.require_subcommand(1);

  std::string format = "text";
  std::uint64_t seed = 0;
  double tol = 0.0;
  app.add_option("--format", format, "report format")
      ->check(CLI::IsMember({"text", "structured"}))
      ->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--tol", tol, "override the eq_tol comparison threshold")
      ->check(CLI::PositiveNumber);

  std::string check_path;
  auto* check_cmd = app.add_subcommand("check", "run the checks of a scenario file");
  check_cmd->fallthrough();
  check_cmd->add_option("scenario", check_path, "scenario JSON file")->required();

  std::string sample_path;
  long long sample_n = 0;
  auto* sample_cmd =
      app.add_subcommand("sample", "run the sampling requests of a scenario file");
  sample_cmd->fallthrough();
  sample_cmd->add_option("scenario", sample_path, "scenario JSON file")->required();
  sample_cmd->add_option("--n", sample_n, "override the sample count");

  std::vector<double> thetas;
  long long epr_n = 100000;
  auto* epr_cmd =
      app.add_subcommand("epr", "singlet correlations of local measurement pairs");
  epr_cmd->fallthrough();
  epr_cmd->add_option("--theta", thetas, "relative angles (comma separated)")
      ->required()
      ->delimiter(',');
  epr_cmd->add_option("--n", epr_n, "samples per angle")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems count as load errors
  }

  try {
    const qmeas::ReportFormat report_format = parse_format(format);
    if (*check_cmd) {
      qmeas::Scenario scenario = qmeas::load_scenario(check_path);
      apply_overrides(scenario, seed_opt->count() > 0, seed, tol);
      const auto results = qmeas::run_checks(scenario);
      const auto report = qmeas::emit_report(scenario, results, report_format);
      std::cout << report.body;
      return report.exit_code;
    }
    if (*sample_cmd) {
      qmeas::Scenario scenario = qmeas::load_scenario(sample_path);
      apply_overrides(scenario, seed_opt->count() > 0, seed, tol);
      const auto results = qmeas::run_sampling(scenario, sample_n);
      const auto report =
          qmeas::emit_sample_report(scenario, results, report_format);
      std::cout << report.body;
      return report.exit_code;
    }
    const std::uint64_t epr_seed = seed_opt->count() > 0 ? seed : 0;
    qmeas::Tolerance epr_tol;
    if (tol > 0.0) epr_tol = qmeas::Tolerance(tol, epr_tol.eig_cluster_tol);
    const auto report = qmeas::epr_demo(thetas, epr_n, epr_seed, epr_tol);
    const auto rendered = qmeas::emit_epr_report(report, report_format, epr_tol);
    std::cout << rendered.body;
    return rendered.exit_code;
  } catch (const qmeas::ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
