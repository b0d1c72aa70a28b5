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

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace {

struct CliRun {
  int exit_code;
  std::string stdout_text;
};

CliRun run_cli(const std::string& args) {
  const std::string out_file =
      std::string("/tmp/qmeas_cli_out_") + std::to_string(::getpid()) + ".txt";
  const std::string cmd = std::string(QMEAS_CLI_PATH) + " " + args + " > " +
                          out_file + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream body;
  body << in.rdbuf();
  run.stdout_text = body.str();
  std::remove(out_file.c_str());
  return run;
}

std::string scenario(const std::string& name) {
  return std::string(QMEAS_SCENARIO_DIR) + "/" + name;
}

std::string data(const std::string& name) {
  return std::string(QMEAS_TEST_DATA_DIR) + "/" + name;
}

}  // namespace

TEST_CASE("cli: exit code 0 for passing scenarios") {
  for (const char* name :
       {"cnot_luders.json", "swap_counter.json", "epr_singlet.json",
        "theorem2_random.json"}) {
    const CliRun run = run_cli("check " + scenario(name));
    INFO(run.stdout_text);
    REQUIRE(run.exit_code == 0);
  }
  REQUIRE(run_cli("check " + data("minimal.json")).exit_code == 0);
}

TEST_CASE("cli: exit code 1 when a check fails, failing id in the footer") {
  const CliRun run = run_cli("check " + data("corrupted_instrument.json"));
  REQUIRE(run.exit_code == 1);
  REQUIRE(run.stdout_text.find("failed: dl_corrupted") != std::string::npos);
  REQUIRE(run.stdout_text.find("[SKIP] thm2_corrupted") != std::string::npos);
}

TEST_CASE("cli: exit code 2 for load errors") {
  REQUIRE(run_cli("check " + data("bad_unitary.json")).exit_code == 2);
  REQUIRE(run_cli("check " + data("malformed.json")).exit_code == 2);
  REQUIRE(run_cli("check /nonexistent/file.json").exit_code == 2);
  REQUIRE(run_cli("definitely-not-a-subcommand").exit_code == 2);
}

TEST_CASE("cli: repeated structured check runs are byte-identical") {
  const std::string args =
      "check " + scenario("cnot_luders.json") + " --format structured";
  const CliRun first = run_cli(args);
  const CliRun second = run_cli(args);
  REQUIRE(first.exit_code == 0);
  REQUIRE(first.stdout_text == second.stdout_text);
  REQUIRE(first.stdout_text.find("\"seed\":20240817") != std::string::npos);

  // an explicit seed overrides the scenario seed
  const CliRun reseeded = run_cli(args + " --seed 5");
  REQUIRE(reseeded.stdout_text.find("\"seed\":5") != std::string::npos);
}

TEST_CASE("cli: sample and epr subcommands run deterministically") {
  const std::string args = "sample " + scenario("cnot_luders.json") +
                           " --n 5000 --format structured";
  const CliRun first = run_cli(args);
  const CliRun second = run_cli(args);
  REQUIRE(first.exit_code == 0);
  REQUIRE(first.stdout_text == second.stdout_text);

  const CliRun epr =
      run_cli("epr --theta 0,1.5707963267948966 --n 20000 --format structured");
  REQUIRE(epr.exit_code == 0);
  REQUIRE(epr.stdout_text.find("\"command\":\"epr\"") != std::string::npos);

  // a scenario without sampling requests is an empty, successful run
  const CliRun empty = run_cli("sample " + data("minimal.json"));
  REQUIRE(empty.exit_code == 0);
}
