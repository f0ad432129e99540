#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bsdeopt/drivers.hpp"
#include "bsdeopt/market.hpp"

namespace bsdeopt {

// Scenario files are flat `key = value` text: one assignment per line, `#`
// starts a comment, blank lines are ignored.  Keys are dotted paths
// (`market.mu`, `numerics.steps`, ...).  Vectors are comma-separated numbers,
// point lists use `;` between points, and union geometries join members with
// `|`.  Unknown or duplicated keys are rejected with the offending line
// number so typos cannot silently fall back to defaults.
//
// Geometry grammar (value of `constraints.investment.set` and friends):
//
//   full
//   box LOWER ; UPPER              e.g.  box -0.5,0 ; 0.5,inf
//   ball CENTER ; RADIUS           e.g.  ball 0,0 ; 0.75
//   halfspace NORMAL ; OFFSET      e.g.  halfspace 1,1 ; 0.2
//   polytope V1 ; V2 ; ...         e.g.  polytope 0,0 ; 1,0 ; 0,1
//   points P1 ; P2 ; ...           e.g.  points 0 ; 0.3
//   <member> | <member> | ...      union of convex members
//
// Piecewise-constant schedules add indexed keys
// `constraints.<which>.schedule.<i> = TIME : GEOMETRY` with i = 0,1,2,...
//
// `numerics.z_cap = auto` and `numerics.mode = auto` are resolved while
// parsing, so a serialized scenario always carries concrete values and
// re-parsing it is exactly reproducible.

enum class SolveMode { Ode, Lsmc };

struct NumericsConfig {
  int steps = 256;
  int paths = 100000;
  std::uint64_t seed = 12345;
  SolveMode mode = SolveMode::Ode;
  int basis_degree = 3;
  double z_cap = 0.0;  // resolved; `auto` becomes 10 * (theta_bound + 1)
  double ode_tol = 1e-6;
  double band = 3.0;
  double violation_band = 4.0;
};

struct Scenario {
  MarketModel market;
  UtilityProblem problem;
  NumericsConfig numerics;
  std::vector<std::string> perturbations;  // verify-time strategy variants
  std::string output_dir = "out";
};

// Parses and fully validates a scenario.  Every failure -- syntax, unknown
// key, bad value, or a model/problem validation error -- is reported as
// ConfigError so callers have a single class of "bad input" outcomes.
Scenario parse_scenario(const std::string& text);

// Reads `path` and parses its contents.
Scenario load_scenario(const std::string& path);

// Canonical manifest: every key explicit, fixed order, shortest round-trip
// number formatting.  parse_scenario(serialize_scenario(s)) reproduces `s`.
std::string serialize_scenario(const Scenario& s);

// Replaces one key and re-parses.  Used by sweeps and command-line overrides;
// the value grammar is identical to the scenario file.
Scenario apply_override(const Scenario& s, const std::string& key,
                        const std::string& value);

const char* solve_mode_name(SolveMode mode);

}  // namespace bsdeopt
