#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bsdeopt/bsde.hpp"
#include "bsdeopt/scenario.hpp"
#include "bsdeopt/verify.hpp"

namespace bsdeopt {

// Exit codes shared by the runner and the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;      // bad scenario or validation failure
inline constexpr int kExitSolver = 3;      // runtime failure inside a solver
inline constexpr int kExitVerifyFail = 4;  // verification battery rejected

// Added to the scenario seed for the verification batch, so regression-mode
// solves and the verification simulation never share draws.
inline constexpr std::uint64_t kVerifySeedOffset = 1000003;

struct RunResult {
  int exit_code = kExitOk;
  std::string message;  // one-line outcome summary
  double y0 = std::numeric_limits<double>::quiet_NaN();
  double analytic = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> outputs;  // files written, in write order
  std::optional<VerificationReport> report;  // present for verify runs
};

// Solves the scenario's equation with the configured mode.
BsdeSolution solve_scenario(const Scenario& s);

// solve: solves and writes solution.csv + manifest.scn.
// verify: additionally simulates the optimal strategy and every configured
//         perturbation on a fresh batch, runs the verification battery, and
//         writes report.txt/report.csv, increments.csv and paths_optimal.csv.
//         exit_code is kExitVerifyFail when the battery rejects.
// sweep:  re-solves with `key` overridden by each value and writes sweep.csv.
//
// out_dir overrides the scenario's output.dir for file placement only; the
// written manifest always carries the scenario's own output.dir, so a re-run
// from the manifest into a second directory produces byte-identical files.
RunResult run_solve(const Scenario& s, const std::string& out_dir = "");
RunResult run_verify(const Scenario& s, const std::string& out_dir = "");
RunResult run_sweep(const Scenario& s, const std::string& key,
                    const std::vector<std::string>& values,
                    const std::string& out_dir = "");

// Applies one perturbation token (p_scale:X, c_scale:X, c_shift:X,
// p_const:V1;V2;...) to a base strategy.  Throws ConfigError on a bad token.
Strategy perturbed_strategy(const Strategy& base, const std::string& token,
                            int dim);

}  // namespace bsdeopt
