#pragma once

#include <functional>
#include <string>

#include "bsdeopt/bsde.hpp"

namespace bsdeopt {

// Feedback controls.  Rules are evaluated at (step k, time t_k, wealth x,
// Brownian state w); the investment rule is only called for k < N.  For the
// exponential family consumption/investment are absolute currency amounts;
// for log/power they are rates relative to wealth.
struct Strategy {
  UtilityFamily kind = UtilityFamily::Log;
  bool relative = true;
  std::string source = "optimal";
  std::function<double(int, double, double, const Vec&)> consumption;
  std::function<Vec(int, double, double, const Vec&)> investment;
};

// Builds the optimal feedback rules from a solved equation:
//   exponential: c* = h x + Y - (1/gamma) log(h/alpha),
//                p* = proj_{hP}(Z + theta/gamma) / h;
//   log:         c~* = argmax over C of (alpha/h) log c - c,  p~* = proj_P(theta);
//   power:       c~* = argmax over C of (alpha/gamma) c^gamma e^Y - c,
//                p~* = proj_P((Z + theta)/(1 - gamma)).
Strategy optimal_strategy(const MarketModel& model, const UtilityProblem& problem,
                          const BsdeSolution& solution);

// Perturbation wrappers for the verification battery.
Strategy scale_consumption(Strategy s, double factor);
Strategy shift_consumption(Strategy s, double delta);
Strategy scale_investment(Strategy s, double factor);
Strategy constant_investment(Strategy s, Vec p);

struct WealthPathSet {
  Vec grid;
  std::uint64_t seed = 0;
  bool relative_controls = false;
  Mat x;  // paths x (N+1)
  Mat c;  // paths x (N+1); c(i,k) applies on [t_k, t_{k+1}), col N is the rate at T
  Mat p;  // paths x (N*n)
  int nonpositive_wealth = 0;  // entries with X <= 0 (informational; additive only)

  int path_count() const { return static_cast<int>(x.rows()); }
  int steps() const { return static_cast<int>(grid.size()) - 1; }
};

// Euler scheme on the arithmetic wealth equation
//   X_{k+1} = X_k + X_k r dt + p_k (dW_k + theta_k dt) + (e_k - c_k) dt.
// Exponential strategies only; wealth may go negative.
WealthPathSet simulate_wealth_additive(const Strategy& strategy,
                                       const MarketModel& model,
                                       const BrownianBatch& batch, double x0);

// Multiplicative scheme preserving strict positivity at any step size:
//   X_{k+1} = X_k exp(p~_k dW^Q_k - |p~_k|^2 dt / 2 + (r + e~_k - c~_k) dt)
// with dW^Q = dW + theta dt.  Log/Power strategies only.
WealthPathSet simulate_wealth_multiplicative(const Strategy& strategy,
                                             const MarketModel& model,
                                             const BrownianBatch& batch,
                                             double x0);

// Exports t, X, c, p rows for the first `path_budget` paths.
void export_paths_csv(const WealthPathSet& paths, const std::string& file,
                      int path_budget);

}  // namespace bsdeopt
