#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bsdeopt/strategy.hpp"

namespace bsdeopt {

// Monte Carlo estimate of an expected utility.  Paths whose controls are
// invalid for the family (nonpositive consumption or wealth where the utility
// needs them positive) push the value to -infinity and are counted.
struct MCEstimate {
  double value = 0.0;
  double se = 0.0;  // infinite when it cannot be estimated
  int violations = 0;
};

// Candidate value implied by Y_0:
//   exponential  -exp(-gamma (h(0) x + y0))
//   log           h(0) (log x - y0)
//   power         x^gamma e^{-y0} / gamma
double analytic_value(const MarketModel& model, const UtilityProblem& problem,
                      double y0);

// Discounted utility of consumption plus terminal wealth.  On each interval
// the consumption rate is frozen at its left value (exactly as the simulators
// apply it) and the remaining smooth discount/wealth factor is integrated by
// the trapezoid rule.  r_process uses the same quadrature, so the estimate
// equals the sample mean of the terminal R values.
MCEstimate expected_utility_mc(const WealthPathSet& paths,
                               const MarketModel& model,
                               const UtilityProblem& problem);

// The verification process R per path (paths x (N+1)): utility accrued so far
// plus the candidate value of the remaining horizon.  R_0 equals
// analytic_value exactly; R is a supermartingale for admissible controls and
// a martingale at the optimum.  batch must be the one the paths were
// simulated from (checked via seed and grid).
Mat r_process(const WealthPathSet& paths, const BrownianBatch& batch,
              const MarketModel& model, const UtilityProblem& problem,
              const BsdeSolution& solution);

struct SupermartingaleReport {
  Vec increment_mean;  // per interval
  Vec increment_se;
  int flagged = 0;       // intervals with mean > violation_band * se (+ floor)
  double total_drift = 0.0;  // mean of R_T - R_0
  double total_se = 0.0;
  bool supermartingale_ok = false;  // flagged == 0
  bool martingale_ok = false;       // |total_drift| <= band * total_se
};

// One-sided per-interval drift test plus a two-sided test of the total drift.
// A small absolute floor (1e-10 times the R_0 magnitude) keeps exactly
// degenerate processes from flagging on rounding noise.  Needs >= 2 paths.
SupermartingaleReport supermartingale_test(const Mat& r, double band = 3.0,
                                           double violation_band = 4.0);

// Fraction of E|R_k| carried by the largest (1 - quantile) share of paths,
// maximized over time points.  Uniformly integrable families keep this small;
// values near one signal tails heavy enough to undermine the supermartingale
// argument.  Diagnostic only.
double tail_mass_diagnostic(const Mat& r, double quantile = 0.99);

// Reference Y_0 / value for unconstrained markets with constant coefficients,
// computed by quadrature of the linearized equation (closed form for power);
// entirely independent of the equation solvers.  Throws PreconditionViolated
// when coefficients are non-constant or a constraint set is not the full
// space.
double merton_oracle_y0(const MarketModel& model, const UtilityProblem& problem);
double merton_oracle_value(const MarketModel& model,
                           const UtilityProblem& problem);

enum class Comparison { Dominated, WithinNoise, ExceedsAnalytic };
const char* comparison_name(Comparison c);

struct ComparisonResult {
  Comparison verdict = Comparison::WithinNoise;
  double gap = 0.0;  // analytic - estimate; positive = strategy under-performs
};

// Dominated when gap > band * se, ExceedsAnalytic when gap < -band * se.
ComparisonResult classify_candidate(double analytic, const MCEstimate& mc,
                                    double band = 3.0);

struct StrategyVerification {
  std::string source;
  bool investment_feasible = true;   // sampled membership of p in P_t
  bool consumption_feasible = true;  // sampled membership of the relative rate
  MCEstimate utility;
  ComparisonResult vs_analytic;
  bool smg_evaluated = false;  // false when R is undefined on some path
  SupermartingaleReport smg;
  double tail_mass = 0.0;
  int nonpositive_wealth = 0;
};

// Runs the full battery for one simulated strategy.
StrategyVerification verify_strategy(const WealthPathSet& paths,
                                     const BrownianBatch& batch,
                                     const MarketModel& model,
                                     const UtilityProblem& problem,
                                     const BsdeSolution& solution,
                                     const std::string& source,
                                     double band = 3.0,
                                     double violation_band = 4.0);

struct VerificationReport {
  double y0 = 0.0;
  double analytic = 0.0;
  std::optional<double> merton_y0;  // when the oracle's preconditions hold
  double band = 3.0;
  double violation_band = 4.0;
  StrategyVerification optimal;
  std::vector<StrategyVerification> perturbed;

  // The optimal candidate must look like a martingale within noise; feasible
  // perturbations must not beat the analytic value.
  bool optimal_ok() const;
  bool perturbations_ok() const;
  bool pass() const { return optimal_ok() && perturbations_ok(); }
};

std::string format_report(const VerificationReport& report);
void write_report_csv(const VerificationReport& report, const std::string& file);

}  // namespace bsdeopt
