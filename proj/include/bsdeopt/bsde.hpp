#pragma once

#include <limits>
#include <memory>
#include <vector>

#include "bsdeopt/drivers.hpp"
#include "bsdeopt/market.hpp"

namespace bsdeopt {

// Solver knobs for the regression mode.
struct LsmcSpec {
  int degree = 3;  // per-dimension polynomial degree of the state basis
  double z_cap = std::numeric_limits<double>::infinity();  // |z| truncation
  double fp_tol = 1e-10;
  int fp_max_iter = 50;
};

// Solution of Y_t = xi + int_t^T f(s,Y_s,Z_s) ds + int_t^T Z_s dW_s.  Note the
// plus sign on the stochastic integral: Z here is the negative of the usual
// martingale-representation integrand, and every downstream formula uses this
// convention.
struct BsdeSolution {
  enum class Mode { Deterministic, Regression };

  Mode mode = Mode::Deterministic;
  Vec grid;
  std::shared_ptr<const Driver> driver;
  double y0 = 0;

  // Deterministic mode: Y at the grid points, Z identically zero.
  Vec y_det;

  // Regression mode: per-step coefficients over the state basis.  e_coeffs[k]
  // represents E[Y_{k+1} | W_k]; z_coeffs[k] (basis_dim x n) represents Z_k.
  int state_dim = 0;
  int basis_degree = 3;
  double z_cap = std::numeric_limits<double>::infinity();
  double fp_tol = 1e-10;
  int fp_max_iter = 50;
  std::vector<Vec> e_coeffs;
  std::vector<Mat> z_coeffs;
  Vec r2;  // per-step regression R^2 of the conditional-expectation fit

  // Terminal value when xi is a constant; NaN when it was given per path.
  double terminal_const = std::numeric_limits<double>::quiet_NaN();

  // Diagnostic: max |Y| against a Gronwall-style bound assembled from sampled
  // driver constants.  Never a correctness gate.
  double y_bound = std::numeric_limits<double>::infinity();
  bool y_bound_flag = false;

  int steps() const { return static_cast<int>(grid.size()) - 1; }

  // Y_k and Z_k as functions of the Brownian state (w ignored and Z = 0 in
  // deterministic mode).  In regression mode y_at re-runs the stored implicit
  // step and reproduces the solver's internal per-path values bit-exactly.
  double y_at(int k, const Vec& w) const;
  Vec z_at(int k, const Vec& w) const;
};

struct BmoDiagnostic {
  double estimate = 0;  // max over grid times of the fitted conditional tail
  Vec per_time;         // the per-grid-time max of the fitted conditionals
};

// Dimension of the tensor polynomial basis used at interior steps.
int lsmc_basis_dim(int state_dim, int degree);

// Backward integration of Y' = -f(t, Y, 0) with an embedded 4(5) pair, one
// step per grid interval, recursive halving when the embedded error estimate
// exceeds ode_tol.  Requires a deterministic driver.
BsdeSolution solve_deterministic(std::shared_ptr<const Driver> driver,
                                 double terminal, const Vec& grid,
                                 double ode_tol = 1e-6);

// Least-squares Monte Carlo backward induction on the Brownian state.
BsdeSolution solve_lsmc(std::shared_ptr<const Driver> driver, const Vec& terminal,
                        const BrownianBatch& batch, const LsmcSpec& spec = {});
BsdeSolution solve_lsmc(std::shared_ptr<const Driver> driver, double terminal,
                        const BrownianBatch& batch, const LsmcSpec& spec = {});

// Regression estimate of sup_tau E[int_tau^T |Z|^2 dt | F_tau] over grid
// times, maximized over bulk states (|W| within 2.5 sigma; the fitted
// conditional extrapolates unreliably beyond that).  Diagnostic only.
BmoDiagnostic bmo_estimate(const BsdeSolution& solution, const BrownianBatch& batch);

// Columns: t, y, z (deterministic) or t, e/z coefficients, r2 (regression).
void export_solution_csv(const BsdeSolution& solution, const std::string& path);

}  // namespace bsdeopt
