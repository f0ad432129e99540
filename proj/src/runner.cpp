#include "bsdeopt/runner.hpp"

#include <algorithm>
#include <filesystem>

#include "bsdeopt/csv.hpp"
#include "bsdeopt/errors.hpp"

namespace bsdeopt {
namespace {

std::vector<double> scenario_grid(const Scenario& s) {
  return uniform_grid(s.market.T, s.numerics.steps);
}

double terminal_value(const UtilityProblem& p) {
  return p.family == UtilityFamily::Exponential ? p.terminal_endowment : 0.0;
}

std::string output_directory(const Scenario& s, const std::string& out_dir) {
  std::string dir = out_dir.empty() ? s.output_dir : out_dir;
  if (dir.empty()) throw ConfigError("output directory is empty");
  std::filesystem::create_directories(dir);
  return dir;
}

WealthPathSet simulate(const Strategy& strategy, const Scenario& s,
                       const BrownianBatch& batch) {
  if (s.problem.family == UtilityFamily::Exponential)
    return simulate_wealth_additive(strategy, s.market, batch, s.problem.x);
  return simulate_wealth_multiplicative(strategy, s.market, batch, s.problem.x);
}

// First min(budget, path_count) paths of the driving increments, one row per
// (path, step).  Capped: the full batch would be gigabytes of text.
void write_increments_csv(const BrownianBatch& batch, const std::string& file,
                          int budget) {
  CsvWriter out(file);
  std::vector<std::string> header = {"path", "step", "t"};
  for (int j = 0; j < batch.n; ++j)
    header.push_back("dw_" + std::to_string(j));
  out.row(header);
  int limit = std::min(budget, batch.path_count());
  std::vector<double> cells(3 + batch.n);
  for (int i = 0; i < limit; ++i)
    for (int k = 0; k < batch.steps(); ++k) {
      cells[0] = i;
      cells[1] = k;
      cells[2] = batch.grid[k];
      for (int j = 0; j < batch.n; ++j) cells[3 + j] = batch.incr_at(i, k, j);
      out.numeric_row(cells);
    }
}

}  // namespace

BsdeSolution solve_scenario(const Scenario& s) {
  auto driver = make_driver(s.market, s.problem);
  std::vector<double> grid = scenario_grid(s);
  double terminal = terminal_value(s.problem);
  if (s.numerics.mode == SolveMode::Ode) {
    Vec grid_vec = Eigen::Map<const Vec>(grid.data(),
                                         static_cast<Eigen::Index>(grid.size()));
    return solve_deterministic(driver, terminal, grid_vec, s.numerics.ode_tol);
  }
  BrownianBatch batch =
      sample_brownian(s.numerics.seed, grid, s.market.n, s.numerics.paths);
  LsmcSpec spec;
  spec.degree = s.numerics.basis_degree;
  spec.z_cap = s.numerics.z_cap;
  return solve_lsmc(driver, terminal, batch, spec);
}

Strategy perturbed_strategy(const Strategy& base, const std::string& token,
                            int dim) {
  std::size_t colon = token.find(':');
  std::string head = colon == std::string::npos ? token : token.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
  auto number = [&](const std::string& text) {
    std::size_t consumed = 0;
    double v = 0;
    try {
      v = std::stod(text, &consumed);
    } catch (const std::exception&) {
      consumed = std::string::npos;
    }
    if (consumed != text.size())
      throw ConfigError("bad perturbation argument in '" + token + "'");
    return v;
  };
  if (head == "p_scale") return scale_investment(base, number(arg));
  if (head == "c_scale") return scale_consumption(base, number(arg));
  if (head == "c_shift") return shift_consumption(base, number(arg));
  if (head == "p_const") {
    std::vector<double> parts;
    std::size_t start = 0;
    while (true) {
      std::size_t pos = arg.find(';', start);
      parts.push_back(number(arg.substr(start, pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (static_cast<int>(parts.size()) != dim)
      throw ConfigError("p_const needs " + std::to_string(dim) +
                        " components in '" + token + "'");
    Vec p(dim);
    for (int j = 0; j < dim; ++j) p[j] = parts[static_cast<std::size_t>(j)];
    return constant_investment(base, std::move(p));
  }
  throw ConfigError("unknown perturbation '" + token + "'");
}

RunResult run_solve(const Scenario& s, const std::string& out_dir) {
  std::string dir = output_directory(s, out_dir);
  RunResult res;
  BsdeSolution solution = solve_scenario(s);
  res.y0 = solution.y0;
  res.analytic = analytic_value(s.market, s.problem, solution.y0);

  export_solution_csv(solution, dir + "/solution.csv");
  res.outputs.push_back(dir + "/solution.csv");
  write_text_file(dir + "/manifest.scn", serialize_scenario(s));
  res.outputs.push_back(dir + "/manifest.scn");

  res.message = "solved (" + std::string(solve_mode_name(s.numerics.mode)) +
                "): y0 = " + format_double(res.y0) +
                ", value = " + format_double(res.analytic);
  return res;
}

RunResult run_verify(const Scenario& s, const std::string& out_dir) {
  std::string dir = output_directory(s, out_dir);
  RunResult res;
  BsdeSolution solution = solve_scenario(s);
  res.y0 = solution.y0;
  res.analytic = analytic_value(s.market, s.problem, solution.y0);

  export_solution_csv(solution, dir + "/solution.csv");
  res.outputs.push_back(dir + "/solution.csv");
  write_text_file(dir + "/manifest.scn", serialize_scenario(s));
  res.outputs.push_back(dir + "/manifest.scn");

  Strategy optimal = optimal_strategy(s.market, s.problem, solution);
  BrownianBatch batch =
      sample_brownian(s.numerics.seed + kVerifySeedOffset, scenario_grid(s),
                      s.market.n, s.numerics.paths);

  VerificationReport report;
  report.y0 = solution.y0;
  report.analytic = res.analytic;
  report.band = s.numerics.band;
  report.violation_band = s.numerics.violation_band;
  try {
    report.merton_y0 = merton_oracle_y0(s.market, s.problem);
  } catch (const Error&) {
    // Oracle preconditions (unconstrained sets, constant coefficients) not
    // met; the report simply omits the cross-check.
  }

  WealthPathSet optimal_paths = simulate(optimal, s, batch);
  report.optimal =
      verify_strategy(optimal_paths, batch, s.market, s.problem, solution,
                      "optimal", s.numerics.band, s.numerics.violation_band);
  for (const std::string& token : s.perturbations) {
    Strategy variant = perturbed_strategy(optimal, token, s.market.n);
    report.perturbed.push_back(
        verify_strategy(simulate(variant, s, batch), batch, s.market, s.problem,
                        solution, variant.source, s.numerics.band,
                        s.numerics.violation_band));
  }

  write_text_file(dir + "/report.txt", format_report(report));
  res.outputs.push_back(dir + "/report.txt");
  write_report_csv(report, dir + "/report.csv");
  res.outputs.push_back(dir + "/report.csv");
  write_increments_csv(batch, dir + "/increments.csv", 64);
  res.outputs.push_back(dir + "/increments.csv");
  export_paths_csv(optimal_paths, dir + "/paths_optimal.csv", 16);
  res.outputs.push_back(dir + "/paths_optimal.csv");

  res.report = std::move(report);
  bool ok = res.report->pass();
  res.exit_code = ok ? kExitOk : kExitVerifyFail;
  res.message = std::string("verification ") + (ok ? "PASS" : "FAIL") +
                ": y0 = " + format_double(res.y0) +
                ", value = " + format_double(res.analytic);
  return res;
}

RunResult run_sweep(const Scenario& s, const std::string& key,
                    const std::vector<std::string>& values,
                    const std::string& out_dir) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::string dir = output_directory(s, out_dir);
  RunResult res;
  CsvWriter out(dir + "/sweep.csv");
  out.row({"param", "value", "y0", "analytic_value"});
  for (const std::string& value : values) {
    Scenario variant = apply_override(s, key, value);
    BsdeSolution solution = solve_scenario(variant);
    double analytic = analytic_value(variant.market, variant.problem, solution.y0);
    out.row({key, value, format_double(solution.y0), format_double(analytic)});
    res.y0 = solution.y0;  // last point, for the summary line
    res.analytic = analytic;
  }
  res.outputs.push_back(dir + "/sweep.csv");
  res.message = "swept " + std::to_string(values.size()) + " values of " + key;
  return res;
}

}  // namespace bsdeopt
