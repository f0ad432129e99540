#include <CLI11.hpp>
#include <cstdint>
#include <fmt/core.h>
#include <optional>
#include <string>
#include <vector>

#include "bsdeopt/runner.hpp"

namespace {

void print_result(const bsdeopt::RunResult& res) {
  fmt::print("{}\n", res.message);
  if (res.report) fmt::print("{}", bsdeopt::format_report(*res.report));
  for (const std::string& file : res.outputs) fmt::print("wrote {}\n", file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained consumption-investment: quadratic-BSDE solver and "
               "strategy verifier"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir;
  std::string param;
  std::vector<std::string> values;
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  std::optional<int> steps;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("scenario", scenario_path, "scenario file (.scn)")
        ->required();
    cmd->add_option("--out", out_dir,
                    "output directory (default: the scenario's output.dir)");
    cmd->add_option("--seed", seed, "override numerics.seed");
    cmd->add_option("--paths", paths, "override numerics.paths");
    cmd->add_option("--steps", steps, "override numerics.steps");
  };

  CLI::App* solve =
      app.add_subcommand("solve", "solve the equation and export y/z");
  add_common(solve);
  CLI::App* verify = app.add_subcommand(
      "verify", "solve, simulate strategies and run the verification battery");
  add_common(verify);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "re-solve across several values of one scenario key");
  add_common(sweep);
  sweep->add_option("--param", param, "scenario key to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")
      ->required()
      ->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    bsdeopt::Scenario scenario = bsdeopt::load_scenario(scenario_path);
    if (seed)
      scenario = bsdeopt::apply_override(scenario, "numerics.seed",
                                         std::to_string(*seed));
    if (paths)
      scenario = bsdeopt::apply_override(scenario, "numerics.paths",
                                         std::to_string(*paths));
    if (steps)
      scenario = bsdeopt::apply_override(scenario, "numerics.steps",
                                         std::to_string(*steps));

    bsdeopt::RunResult res;
    if (solve->parsed()) {
      res = bsdeopt::run_solve(scenario, out_dir);
    } else if (verify->parsed()) {
      res = bsdeopt::run_verify(scenario, out_dir);
    } else {
      res = bsdeopt::run_sweep(scenario, param, values, out_dir);
    }
    print_result(res);
    return res.exit_code;
  } catch (const bsdeopt::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return bsdeopt::kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return bsdeopt::kExitSolver;
  }
}
