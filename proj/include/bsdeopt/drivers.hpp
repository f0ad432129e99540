#pragma once

#include <memory>
#include <optional>

#include "bsdeopt/constraints.hpp"
#include "bsdeopt/market.hpp"

namespace bsdeopt {

enum class UtilityFamily { Exponential, Log, Power };

// Preference specification plus the admissible control sets.  gamma is the
// absolute risk aversion for Exponential (> 0) and the CRRA exponent for
// Power (in (-inf,0) or (0,1)); it is ignored for Log.
struct UtilityProblem {
  UtilityFamily family = UtilityFamily::Log;
  double gamma = 1.0;
  double alpha = 1.0;             // consumption weight, > 0
  double beta = 0.0;              // utility discount rate
  double x = 1.0;                 // initial wealth, > 0 for Log/Power
  double terminal_endowment = 0;  // lump sum added to X_T, Exponential only
  ConstraintSet investment_set{1, Geometry{FullSpace{}}};
  ConstraintSet consumption_set{1, Geometry{FullSpace{}}};

  // Checks parameter ranges and compatibility with the market model
  // (dimensions, income accounting convention).  Throws OutOfRange,
  // NegativeBeta, ShapeMismatch or PreconditionViolated.
  void validate(const MarketModel& model) const;
};

// Deterministic horizon functions.  h_exponential solves h' = h(h - r) with
// h(T) = 1 (defined for r >= 0); h_log solves h' = beta*h - alpha with
// h(T) = 1 (defined for beta >= 0, else NegativeBeta).  Both are strictly
// positive on [0, T].
double h_exponential(double t, double r, double T);
double h_log(double t, double alpha, double beta, double T);

// One driver evaluation broken into its reproducible parts: the projection
// distance entering the quadratic penalty and, for the CRRA cases, the value
// of the inner consumption maximization.
struct DriverEvaluation {
  double f_value = 0;
  double dist_term = 0;         // dist(q, set) actually used, not squared
  double consumption_term = 0;  // CRRA consumption max value; 0 otherwise
};

// f(t,y,z) for the exponential-utility equation.  hP must already be the
// investment set scaled by h(t); e is the absolute income rate.
DriverEvaluation driver_exponential(double t, double y, const Vec& z,
                                    const Vec& theta, double e, double h,
                                    double gamma, double alpha, double beta,
                                    const ConstraintSet& hP);

// f(t,y) for the log-utility equation (z-independent); e_rel is income
// relative to wealth.
DriverEvaluation driver_log(double t, double y, const Vec& theta, double e_rel,
                            double h, double r, double alpha,
                            const ConstraintSet& P, const ConstraintSet& C);

// f(t,y,z) for the power-utility equation.
DriverEvaluation driver_power(double t, double y, const Vec& z,
                              const Vec& theta, double e_rel, double r,
                              double alpha, double beta, double gamma,
                              const ConstraintSet& P, const ConstraintSet& C);

// Driver handle consumed by the solvers.  w is the Brownian state (ignored
// when the ingredients are deterministic).
class Driver {
 public:
  virtual ~Driver() = default;
  virtual int dim() const = 0;
  virtual bool deterministic() const = 0;
  virtual double f(double t, const Vec& w, double y, const Vec& z) const = 0;

  // Empirical growth/Lipschitz constants sampled on a lattice over
  // [0,T] x {|y| <= y_range} x {|z| <= z_range}; diagnostic use only.
  double sampled_growth_constant(double T, double y_range = 3.0,
                                 double z_range = 5.0) const;
  double sampled_y_slope(double T, double y_range = 3.0) const;
};

class ExponentialDriver : public Driver {
 public:
  ExponentialDriver(MarketModel model, UtilityProblem problem);
  int dim() const override { return model_.n; }
  bool deterministic() const override { return deterministic_; }
  double f(double t, const Vec& w, double y, const Vec& z) const override;

  DriverEvaluation evaluate(double t, const Vec& w, double y, const Vec& z) const;
  double h(double t) const { return h_exponential(t, model_.r, model_.T); }
  double terminal() const { return problem_.terminal_endowment; }
  const MarketModel& model() const { return model_; }
  const UtilityProblem& problem() const { return problem_; }

 private:
  const ConstraintSet& scaled_set(double t) const;

  MarketModel model_;
  UtilityProblem problem_;
  bool deterministic_ = false;
  std::optional<Vec> theta_const_;
  mutable double cache_t_ = std::numeric_limits<double>::quiet_NaN();
  mutable std::optional<ConstraintSet> cache_set_;
};

class LogDriver : public Driver {
 public:
  LogDriver(MarketModel model, UtilityProblem problem);
  int dim() const override { return model_.n; }
  bool deterministic() const override { return deterministic_; }
  double f(double t, const Vec& w, double y, const Vec& z) const override;

  DriverEvaluation evaluate(double t, const Vec& w, double y) const;
  double h(double t) const {
    return h_log(t, problem_.alpha, problem_.beta, model_.T);
  }
  // The inner consumption maximization depends on t alone; memoized.
  ConsumptionMax consumption_max(double t) const;
  const MarketModel& model() const { return model_; }
  const UtilityProblem& problem() const { return problem_; }

 private:
  MarketModel model_;
  UtilityProblem problem_;
  bool deterministic_ = false;
  std::optional<Vec> theta_const_;
  mutable double cache_t_ = std::numeric_limits<double>::quiet_NaN();
  mutable std::optional<ConsumptionMax> cache_max_;
};

class PowerDriver : public Driver {
 public:
  PowerDriver(MarketModel model, UtilityProblem problem);
  int dim() const override { return model_.n; }
  bool deterministic() const override { return deterministic_; }
  double f(double t, const Vec& w, double y, const Vec& z) const override;

  DriverEvaluation evaluate(double t, const Vec& w, double y, const Vec& z) const;
  // Depends on y as well as t; recomputed per call.
  ConsumptionMax consumption_max(double t, double y) const;
  const MarketModel& model() const { return model_; }
  const UtilityProblem& problem() const { return problem_; }

 private:
  MarketModel model_;
  UtilityProblem problem_;
  bool deterministic_ = false;
  std::optional<Vec> theta_const_;
};

// Ad-hoc driver for tests and benchmarks.
class FunctionDriver : public Driver {
 public:
  using Fn = std::function<double(double, const Vec&, double, const Vec&)>;
  FunctionDriver(int dim, bool deterministic, Fn fn)
      : dim_(dim), deterministic_(deterministic), fn_(std::move(fn)) {}
  int dim() const override { return dim_; }
  bool deterministic() const override { return deterministic_; }
  double f(double t, const Vec& w, double y, const Vec& z) const override {
    return fn_(t, w, y, z);
  }

 private:
  int dim_;
  bool deterministic_;
  Fn fn_;
};

// Builds the matching concrete driver for the problem family.
std::shared_ptr<const Driver> make_driver(const MarketModel& model,
                                          const UtilityProblem& problem);

}  // namespace bsdeopt
