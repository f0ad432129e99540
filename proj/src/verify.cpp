#include "bsdeopt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bsdeopt/csv.hpp"

namespace bsdeopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Candidate-value part of R at one (t, x, y).  analytic_value and r_process
// both go through here so that R_0 equals the analytic value bit for bit.
double candidate_value(const UtilityProblem& problem, double disc, double h,
                       double x, double y) {
  switch (problem.family) {
    case UtilityFamily::Exponential:
      return -disc * std::exp(-problem.gamma * (h * x + y));
    case UtilityFamily::Log:
      return disc * h * (std::log(x) - y);
    case UtilityFamily::Power:
      return disc * std::pow(x, problem.gamma) * std::exp(-y) / problem.gamma;
  }
  throw PreconditionViolated("candidate_value: unknown family");
}

// Instantaneous utility of the stored control value; bad is set when the
// value is outside the utility's domain.
double instant_utility(const UtilityProblem& problem, double control, double x,
                       bool& bad) {
  switch (problem.family) {
    case UtilityFamily::Exponential: {
      const double u = -std::exp(-problem.gamma * control);
      if (!std::isfinite(u)) bad = true;
      return u;
    }
    case UtilityFamily::Log: {
      if (!(control > 0.0) || !(x > 0.0)) {
        bad = true;
        return -kInf;
      }
      return std::log(control * x);
    }
    case UtilityFamily::Power: {
      const double c = control * x;
      if (problem.gamma > 0.0 ? c < 0.0 : !(c > 0.0)) {
        bad = true;
        return -kInf;
      }
      return std::pow(c, problem.gamma) / problem.gamma;
    }
  }
  throw PreconditionViolated("instant_utility: unknown family");
}

double terminal_utility(const UtilityProblem& problem, double disc_T, double xT,
                        bool& bad) {
  switch (problem.family) {
    case UtilityFamily::Exponential: {
      const double u =
          -disc_T * std::exp(-problem.gamma * (xT + problem.terminal_endowment));
      if (!std::isfinite(u)) bad = true;
      return u;
    }
    case UtilityFamily::Log:
      if (!(xT > 0.0)) {
        bad = true;
        return -kInf;
      }
      return disc_T * std::log(xT);
    case UtilityFamily::Power:
      if (problem.gamma > 0.0 ? xT < 0.0 : !(xT > 0.0)) {
        bad = true;
        return -kInf;
      }
      return disc_T * std::pow(xT, problem.gamma) / problem.gamma;
  }
  throw PreconditionViolated("terminal_utility: unknown family");
}

void check_relative_flag(const WealthPathSet& paths,
                         const UtilityProblem& problem) {
  const bool need_relative = problem.family != UtilityFamily::Exponential;
  if (paths.relative_controls != need_relative)
    throw PreconditionViolated(
        "wealth paths carry the wrong control convention for this family");
}

double stderr_of(const Vec& values) {
  const Eigen::Index n = values.size();
  if (n < 2) return kInf;
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / double(n - 1);
  return std::sqrt(var / double(n));
}

double h_at(const UtilityProblem& problem, const MarketModel& model, double t) {
  switch (problem.family) {
    case UtilityFamily::Exponential:
      return h_exponential(t, model.r, model.T);
    case UtilityFamily::Log:
      return h_log(t, problem.alpha, problem.beta, model.T);
    case UtilityFamily::Power:
      return 1.0;  // the power candidate does not use a horizon function
  }
  return 1.0;
}

template <class F>
double simpson(F f, double a, double b, int panels) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

double analytic_value(const MarketModel& model, const UtilityProblem& problem,
                      double y0) {
  const double x = problem.x;
  return candidate_value(problem, 1.0, h_at(problem, model, 0.0), x, y0);
}

MCEstimate expected_utility_mc(const WealthPathSet& paths,
                               const MarketModel& /*model*/,
                               const UtilityProblem& problem) {
  check_relative_flag(paths, problem);
  const int P = paths.path_count();
  const int N = paths.steps();
  if (P < 1 || N < 1)
    throw BadGrid("expected_utility_mc: empty path set");

  Vec disc(N + 1);
  for (int k = 0; k <= N; ++k)
    disc[k] = problem.alpha * std::exp(-problem.beta * paths.grid[k]);
  const double disc_T = std::exp(-problem.beta * paths.grid[N]);

  Vec total(P);
  MCEstimate out;
  for (int i = 0; i < P; ++i) {
    bool bad = false;
    double integral = 0.0;
    // The consumption rate is frozen on [t_k, t_{k+1}) exactly as the
    // simulators apply it; the trapezoid spans only the smooth
    // discount/wealth factor, so no O(dt) bias enters at control switches.
    for (int k = 0; k < N; ++k) {
      const double c = paths.c(i, k);
      const double g_left =
          disc[k] * instant_utility(problem, c, paths.x(i, k), bad);
      const double g_right =
          disc[k + 1] * instant_utility(problem, c, paths.x(i, k + 1), bad);
      integral += 0.5 * (g_left + g_right) * (paths.grid[k + 1] - paths.grid[k]);
    }
    const double u = integral + terminal_utility(problem, disc_T,
                                                 paths.x(i, N), bad);
    if (bad) {
      ++out.violations;
      total[i] = -kInf;
    } else {
      total[i] = u;
    }
  }
  out.value = total.mean();
  out.se = out.violations > 0 ? kInf : stderr_of(total);
  return out;
}

Mat r_process(const WealthPathSet& paths, const BrownianBatch& batch,
              const MarketModel& model, const UtilityProblem& problem,
              const BsdeSolution& solution) {
  check_relative_flag(paths, problem);
  if (batch.seed != paths.seed)
    throw PreconditionViolated(
        "r_process: the path set was not simulated from this batch");
  const int P = paths.path_count();
  const int N = paths.steps();
  if (batch.path_count() != P || batch.steps() != N)
    throw ShapeMismatch("r_process: batch and path set disagree in shape");
  if (solution.grid.size() != N + 1)
    throw ShapeMismatch("r_process: solution grid does not match the paths");
  for (int k = 0; k <= N; ++k)
    if (std::abs(solution.grid[k] - paths.grid[k]) > 1e-12)
      throw ShapeMismatch("r_process: solution and path grids differ");

  Vec disc(N + 1), h(N + 1);
  for (int k = 0; k <= N; ++k) {
    disc[k] = std::exp(-problem.beta * paths.grid[k]);
    h[k] = h_at(problem, model, paths.grid[k]);
  }

  Mat r(P, N + 1);
  for (int i = 0; i < P; ++i) {
    bool bad = false;  // R itself carries the NaN/-inf, nothing to count here
    double integral = 0.0;
    r(i, 0) = candidate_value(problem, disc[0], h[0], paths.x(i, 0),
                              solution.y_at(0, batch.state_vec(i, 0)));
    // Same frozen-rate trapezoid as expected_utility_mc, so the sample mean
    // of R_T is exactly the utility estimate.
    for (int k = 1; k <= N; ++k) {
      const double c = paths.c(i, k - 1);
      const double g_left =
          problem.alpha * disc[k - 1] *
          instant_utility(problem, c, paths.x(i, k - 1), bad);
      const double g_right =
          problem.alpha * disc[k] * instant_utility(problem, c, paths.x(i, k), bad);
      integral += 0.5 * (g_left + g_right) * (paths.grid[k] - paths.grid[k - 1]);
      const double y = solution.y_at(k, batch.state_vec(i, k));
      r(i, k) =
          candidate_value(problem, disc[k], h[k], paths.x(i, k), y) + integral;
    }
  }
  return r;
}

SupermartingaleReport supermartingale_test(const Mat& r, double band,
                                           double violation_band) {
  const int P = static_cast<int>(r.rows());
  const int N = static_cast<int>(r.cols()) - 1;
  if (P < 2 || N < 1)
    throw PreconditionViolated("supermartingale_test: needs >= 2 paths and >= 1 step");
  if (!r.allFinite())
    throw PreconditionViolated("supermartingale_test: R has non-finite entries");

  SupermartingaleReport rep;
  rep.increment_mean.resize(N);
  rep.increment_se.resize(N);
  const double floor = 1e-10 * (1.0 + r.col(0).cwiseAbs().mean());
  for (int k = 0; k < N; ++k) {
    const Vec d = r.col(k + 1) - r.col(k);
    rep.increment_mean[k] = d.mean();
    rep.increment_se[k] = stderr_of(d);
    if (rep.increment_mean[k] > violation_band * rep.increment_se[k] + floor)
      ++rep.flagged;
  }
  const Vec d = r.col(N) - r.col(0);
  rep.total_drift = d.mean();
  rep.total_se = stderr_of(d);
  rep.supermartingale_ok = rep.flagged == 0;
  rep.martingale_ok = std::abs(rep.total_drift) <= band * rep.total_se + floor;
  return rep;
}

double tail_mass_diagnostic(const Mat& r, double quantile) {
  const int P = static_cast<int>(r.rows());
  const int cols = static_cast<int>(r.cols());
  if (P < 1 || cols < 1)
    throw PreconditionViolated("tail_mass_diagnostic: empty matrix");
  if (!(quantile > 0.0 && quantile < 1.0))
    throw OutOfRange("tail_mass_diagnostic: quantile must be in (0, 1)");
  const int tail =
      std::max(1, static_cast<int>(std::ceil((1.0 - quantile) * P - 1e-9)));
  double worst = 0.0;
  std::vector<double> a(P);
  for (int k = 0; k < cols; ++k) {
    for (int i = 0; i < P; ++i) a[i] = std::abs(r(i, k));
    std::nth_element(a.begin(), a.begin() + (P - tail), a.end());
    double top = 0.0, all = 0.0;
    for (int i = 0; i < P - tail; ++i) all += a[i];
    for (int i = P - tail; i < P; ++i) top += a[i];
    all += top;
    if (all > 0.0) worst = std::max(worst, top / all);
  }
  return worst;
}

namespace {

void merton_preconditions(const MarketModel& model,
                          const UtilityProblem& problem) {
  problem.validate(model);
  if (!model.constant_coefficients())
    throw PreconditionViolated("merton oracle: coefficients must be constant");
  auto full = [](const ConstraintSet& s) {
    return !s.time_dependent() &&
           std::holds_alternative<FullSpace>(s.base().shape);
  };
  if (!full(problem.investment_set) || !full(problem.consumption_set))
    throw PreconditionViolated("merton oracle: constraint sets must be the full space");
}

}  // namespace

double merton_oracle_y0(const MarketModel& model,
                        const UtilityProblem& problem) {
  merton_preconditions(model, problem);
  MarketModel m = model;
  m.validate();
  const Vec w0 = Vec::Zero(m.n);
  const double th2 = m.theta(0.0, w0).squaredNorm();
  const double e = m.income_at(0.0, w0);
  const double T = m.T;
  const double r = m.r;
  const double alpha = problem.alpha;
  const double beta = problem.beta;
  const int panels = 200000;

  switch (problem.family) {
    case UtilityFamily::Log: {
      const double h0 = h_log(0.0, alpha, beta, T);
      auto f = [&](double s) {
        const double h = h_log(s, alpha, beta, T);
        const double w = alpha / h;
        const double g = 0.5 * th2 + r + e + w * (std::log(w) - 1.0);
        return std::exp(-beta * s) * (h / h0) * g;
      };
      return -simpson(f, 0.0, T, panels);
    }
    case UtilityFamily::Exponential: {
      const double gamma = problem.gamma;
      const double h0 = h_exponential(0.0, r, T);
      auto f = [&](double s) {
        const double h = h_exponential(s, r, T);
        const double k = th2 / (2.0 * gamma) + h * e +
                         (h / gamma) * (std::log(h / alpha) - 1.0) +
                         beta / gamma;
        return (h0 / h) * std::exp(-r * s) * k;
      };
      return (h0 / h_exponential(T, r, T)) * std::exp(-r * T) *
                 problem.terminal_endowment +
             simpson(f, 0.0, T, panels);
    }
    case UtilityFamily::Power: {
      // u = e^{-kappa Y} turns the scalar equation into a linear one.
      const double gamma = problem.gamma;
      const double kappa = 1.0 / (1.0 - gamma);
      const double c0 =
          gamma * th2 / (2.0 * (1.0 - gamma)) + gamma * (r + e) - beta;
      const double c1 = (1.0 - gamma) * std::pow(alpha, kappa);
      const double xarg = kappa * c0 * T;
      double u0;
      if (std::abs(xarg) < 1e-12) {
        u0 = std::exp(xarg) + c1 * kappa * T * (1.0 + 0.5 * xarg);
      } else {
        u0 = std::exp(xarg) + (c1 / c0) * std::expm1(xarg);
      }
      return -std::log(u0) * (1.0 - gamma);
    }
  }
  throw PreconditionViolated("merton_oracle_y0: unknown family");
}

double merton_oracle_value(const MarketModel& model,
                           const UtilityProblem& problem) {
  return analytic_value(model, problem, merton_oracle_y0(model, problem));
}

const char* comparison_name(Comparison c) {
  switch (c) {
    case Comparison::Dominated: return "dominated";
    case Comparison::WithinNoise: return "within_noise";
    case Comparison::ExceedsAnalytic: return "exceeds_analytic";
  }
  return "unknown";
}

ComparisonResult classify_candidate(double analytic, const MCEstimate& mc,
                                    double band) {
  ComparisonResult res;
  res.gap = analytic - mc.value;
  if (mc.value == -kInf) {
    res.verdict = Comparison::Dominated;
    return res;
  }
  if (res.gap > band * mc.se)
    res.verdict = Comparison::Dominated;
  else if (res.gap < -band * mc.se)
    res.verdict = Comparison::ExceedsAnalytic;
  else
    res.verdict = Comparison::WithinNoise;
  return res;
}

StrategyVerification verify_strategy(const WealthPathSet& paths,
                                     const BrownianBatch& batch,
                                     const MarketModel& model,
                                     const UtilityProblem& problem,
                                     const BsdeSolution& solution,
                                     const std::string& source, double band,
                                     double violation_band) {
  StrategyVerification v;
  v.source = source;
  v.nonpositive_wealth = paths.nonpositive_wealth;

  const int P = paths.path_count();
  const int N = paths.steps();
  const int n = N > 0 ? static_cast<int>(paths.p.cols()) / N : 0;
  const int sample = std::min(200, P);
  for (int i = 0; i < sample && (v.investment_feasible || v.consumption_feasible);
       ++i) {
    for (int k = 0; k < N; ++k) {
      const double t = paths.grid[k];
      if (v.investment_feasible) {
        const Vec p = paths.p.row(i).segment(k * n, n).transpose();
        if (!contains(p, problem.investment_set.at(t), 1e-9))
          v.investment_feasible = false;
      }
      if (v.consumption_feasible) {
        if (!contains(Vec::Constant(1, paths.c(i, k)),
                      problem.consumption_set.at(t), 1e-9))
          v.consumption_feasible = false;
      }
    }
  }

  const double analytic = analytic_value(model, problem, solution.y0);
  const Mat r = r_process(paths, batch, model, problem, solution);
  if (r.allFinite()) {
    v.smg = supermartingale_test(r, band, violation_band);
    v.smg_evaluated = true;
    v.tail_mass = tail_mass_diagnostic(r);
    // E[R_T] is the utility estimate under the shared trapezoid rule.
    v.utility.value = r.col(N).mean();
    v.utility.se = stderr_of(r.col(N));
    v.utility.violations = 0;
  } else {
    v.utility = expected_utility_mc(paths, model, problem);
  }
  v.vs_analytic = classify_candidate(analytic, v.utility, band);
  return v;
}

bool VerificationReport::optimal_ok() const {
  return optimal.vs_analytic.verdict == Comparison::WithinNoise &&
         optimal.investment_feasible && optimal.consumption_feasible &&
         optimal.smg_evaluated && optimal.smg.supermartingale_ok &&
         optimal.smg.martingale_ok;
}

bool VerificationReport::perturbations_ok() const {
  for (const auto& p : perturbed)
    if (p.investment_feasible && p.consumption_feasible &&
        p.vs_analytic.verdict == Comparison::ExceedsAnalytic)
      return false;
  return true;
}

namespace {

std::string yesno(bool b) { return b ? "yes" : "no"; }

void format_strategy(std::string& out, const StrategyVerification& v) {
  out += "strategy " + v.source + "\n";
  out += "  value      " + format_double(v.utility.value) + " (se " +
         format_double(v.utility.se) + ", invalid paths " +
         std::to_string(v.utility.violations) + ")\n";
  out += "  gap        " + format_double(v.vs_analytic.gap) + "  verdict " +
         comparison_name(v.vs_analytic.verdict) + "\n";
  out += "  feasible   investment=" + yesno(v.investment_feasible) +
         " consumption=" + yesno(v.consumption_feasible) + "\n";
  if (v.smg_evaluated) {
    out += "  drift      flagged " + std::to_string(v.smg.flagged) + "/" +
           std::to_string(v.smg.increment_mean.size()) + " intervals, total " +
           format_double(v.smg.total_drift) + " (se " +
           format_double(v.smg.total_se) + ")\n";
    out += "  supermartingale " + yesno(v.smg.supermartingale_ok) +
           ", martingale " + yesno(v.smg.martingale_ok) + ", tail mass " +
           format_double(v.tail_mass) + "\n";
  } else {
    out += "  drift      skipped (R undefined on some path)\n";
  }
  if (v.nonpositive_wealth > 0)
    out += "  nonpositive wealth entries " +
           std::to_string(v.nonpositive_wealth) + "\n";
}

}  // namespace

std::string format_report(const VerificationReport& report) {
  std::string out;
  out += "verification report\n";
  out += "  y0             " + format_double(report.y0) + "\n";
  out += "  analytic value " + format_double(report.analytic) + "\n";
  if (report.merton_y0)
    out += "  merton y0      " + format_double(*report.merton_y0) + "\n";
  out += "  bands          martingale " + format_double(report.band) +
         ", violation " + format_double(report.violation_band) + "\n";
  format_strategy(out, report.optimal);
  for (const auto& p : report.perturbed) format_strategy(out, p);
  out += std::string("overall: ") + (report.pass() ? "PASS" : "FAIL") + "\n";
  return out;
}

void write_report_csv(const VerificationReport& report,
                      const std::string& file) {
  CsvWriter w(file);
  w.row({"source", "investment_feasible", "consumption_feasible", "value",
         "se", "violations", "gap", "verdict", "smg_evaluated", "smg_flagged",
         "total_drift", "total_se", "supermartingale_ok", "martingale_ok",
         "tail_mass", "nonpositive_wealth"});
  auto emit = [&](const StrategyVerification& v) {
    w.row({v.source, v.investment_feasible ? "1" : "0",
           v.consumption_feasible ? "1" : "0", format_double(v.utility.value),
           format_double(v.utility.se), std::to_string(v.utility.violations),
           format_double(v.vs_analytic.gap),
           comparison_name(v.vs_analytic.verdict), v.smg_evaluated ? "1" : "0",
           std::to_string(v.smg.flagged), format_double(v.smg.total_drift),
           format_double(v.smg.total_se), v.smg.supermartingale_ok ? "1" : "0",
           v.smg.martingale_ok ? "1" : "0", format_double(v.tail_mass),
           std::to_string(v.nonpositive_wealth)});
  };
  emit(report.optimal);
  for (const auto& p : report.perturbed) emit(p);
}

}  // namespace bsdeopt
