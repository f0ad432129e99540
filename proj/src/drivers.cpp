#include "bsdeopt/drivers.hpp"

#include <cmath>

#include "bsdeopt/errors.hpp"

namespace bsdeopt {

namespace {

void check_time(double t, double T) {
  if (!(T > 0)) throw OutOfRange("horizon T must be positive");
  if (t < -1e-12 || t > T + 1e-12)
    throw OutOfRange("time outside [0, T]");
}

bool zero_income(const MarketModel& model) {
  return model.income.is_constant() &&
         model.income(0.0, Vec::Zero(std::max(model.n, 1))) == 0.0;
}

}  // namespace

double h_exponential(double t, double r, double T) {
  check_time(t, T);
  if (r < 0) throw OutOfRange("h_exponential requires r >= 0");
  const double tau = std::min(std::max(T - t, 0.0), T);
  if (r == 0) return 1.0 / (1.0 + tau);
  // Denominator 1 - (1-r)e^{-r tau} rewritten as a sum of positive terms.
  const double denom = -std::expm1(-r * tau) + r * std::exp(-r * tau);
  return r / denom;
}

double h_log(double t, double alpha, double beta, double T) {
  check_time(t, T);
  if (alpha <= 0) throw OutOfRange("h_log requires alpha > 0");
  if (beta < 0) throw NegativeBeta("h_log defined only for beta >= 0");
  const double tau = std::min(std::max(T - t, 0.0), T);
  if (beta == 0) return 1.0 + alpha * tau;
  const double ab = alpha / beta;
  return ab + (1.0 - ab) * std::exp(-beta * tau);
}

DriverEvaluation driver_exponential(double t, double y, const Vec& z,
                                    const Vec& theta, double e, double h,
                                    double gamma, double alpha, double beta,
                                    const ConstraintSet& hP) {
  if (!(h > 0)) throw PreconditionViolated("driver_exponential requires h > 0");
  if (!(gamma > 0)) throw OutOfRange("exponential utility requires gamma > 0");
  if (!(alpha > 0)) throw OutOfRange("alpha must be positive");
  const Vec q = z + theta / gamma;
  const double dist = set_distance(q, hP.at(t));
  DriverEvaluation out;
  out.dist_term = dist;
  out.f_value = -0.5 * gamma * dist * dist + z.dot(theta) +
                theta.squaredNorm() / (2.0 * gamma) + h * (e - y) +
                (h / gamma) * (std::log(h / alpha) - 1.0) + beta / gamma;
  return out;
}

DriverEvaluation driver_log(double t, double y, const Vec& theta, double e_rel,
                            double h, double r, double alpha,
                            const ConstraintSet& P, const ConstraintSet& C) {
  if (!(h > 0)) throw PreconditionViolated("driver_log requires h > 0");
  if (!(alpha > 0)) throw OutOfRange("alpha must be positive");
  const double dist = set_distance(theta, P.at(t));
  const ConsumptionMax m = argmax_consumption_log(C, alpha / h, t);
  DriverEvaluation out;
  out.dist_term = dist;
  out.consumption_term = m.value;
  out.f_value = 0.5 * dist * dist - 0.5 * theta.squaredNorm() -
                alpha * y / h - m.value - r - e_rel;
  return out;
}

DriverEvaluation driver_power(double t, double y, const Vec& z,
                              const Vec& theta, double e_rel, double r,
                              double alpha, double beta, double gamma,
                              const ConstraintSet& P, const ConstraintSet& C) {
  if (!(gamma < 1) || gamma == 0)
    throw OutOfRange("power utility requires gamma in (-inf,0) or (0,1)");
  if (!(alpha > 0)) throw OutOfRange("alpha must be positive");
  const double om = 1.0 - gamma;
  const Vec q = (z + theta) / om;
  const double dist = set_distance(q, P.at(t));
  const ConsumptionMax m = argmax_consumption_power(C, alpha, gamma, y, t);
  DriverEvaluation out;
  out.dist_term = dist;
  out.consumption_term = m.value;
  out.f_value =
      gamma * (0.5 * om * dist * dist - (z + theta).squaredNorm() / (2.0 * om) -
               z.squaredNorm() / (2.0 * gamma) - m.value - r - e_rel +
               beta / gamma);
  return out;
}

void UtilityProblem::validate(const MarketModel& model) const {
  if (!(alpha > 0)) throw OutOfRange("alpha must be positive");
  if (investment_set.dim() != model.n)
    throw ShapeMismatch("investment set dimension != n");
  if (consumption_set.dim() != 1)
    throw ShapeMismatch("consumption set must be one-dimensional");
  const bool has_income = !zero_income(model);
  switch (family) {
    case UtilityFamily::Exponential: {
      if (!(gamma > 0)) throw OutOfRange("exponential utility requires gamma > 0");
      const bool unconstrained =
          std::holds_alternative<FullSpace>(consumption_set.base().shape) &&
          !consumption_set.time_dependent();
      if (!unconstrained)
        throw PreconditionViolated(
            "exponential utility requires unconstrained consumption");
      if (has_income && model.income_is_relative)
        throw PreconditionViolated(
            "exponential utility uses absolute income, not relative");
      break;
    }
    case UtilityFamily::Log:
      if (beta < 0) throw NegativeBeta("log utility requires beta >= 0");
      [[fallthrough]];
    case UtilityFamily::Power:
      if (family == UtilityFamily::Power && (!(gamma < 1) || gamma == 0))
        throw OutOfRange("power utility requires gamma in (-inf,0) or (0,1)");
      if (!(x > 0)) throw OutOfRange("initial wealth must be positive");
      if (terminal_endowment != 0)
        throw PreconditionViolated(
            "terminal endowment supported only for exponential utility");
      if (has_income && !model.income_is_relative)
        throw PreconditionViolated(
            "log/power utility uses income relative to wealth");
      break;
  }
}

double Driver::sampled_growth_constant(double T, double y_range,
                                       double z_range) const {
  const Vec w = Vec::Zero(dim());
  const double ys[] = {-y_range, -1.0, 0.0, 1.0, y_range};
  const double zs[] = {-z_range, -1.0, 0.0, 1.0, z_range};
  double k = 0;
  for (int it = 0; it <= 8; ++it) {
    const double t = T * it / 8.0;
    for (double y : ys)
      for (double s : zs) {
        for (int j = 0; j < dim(); ++j) {
          Vec z = Vec::Zero(dim());
          z[j] = s;
          const double v = std::abs(f(t, w, y, z));
          k = std::max(k, v / (1.0 + std::abs(y) + z.squaredNorm()));
        }
      }
  }
  return k;
}

double Driver::sampled_y_slope(double T, double y_range) const {
  const Vec w = Vec::Zero(dim());
  const Vec z = Vec::Zero(dim());
  const double dy = 0.25;
  double k = 0;
  for (int it = 0; it <= 8; ++it) {
    const double t = T * it / 8.0;
    for (double y = -y_range; y < y_range; y += dy)
      k = std::max(k, std::abs(f(t, w, y + dy, z) - f(t, w, y, z)) / dy);
  }
  return k;
}

ExponentialDriver::ExponentialDriver(MarketModel model, UtilityProblem problem)
    : model_(std::move(model)), problem_(std::move(problem)) {
  model_.validate();
  if (problem_.family != UtilityFamily::Exponential)
    throw PreconditionViolated("ExponentialDriver requires the exponential family");
  problem_.validate(model_);
  deterministic_ = model_.deterministic();
  if (model_.constant_coefficients())
    theta_const_ = model_.theta(0.0, Vec::Zero(model_.n));
}

const ConstraintSet& ExponentialDriver::scaled_set(double t) const {
  if (!(cache_t_ == t) || !cache_set_) {
    cache_set_ = scale(problem_.investment_set, h(t));
    cache_t_ = t;
  }
  return *cache_set_;
}

DriverEvaluation ExponentialDriver::evaluate(double t, const Vec& w, double y,
                                             const Vec& z) const {
  Vec tmp;
  if (!theta_const_) tmp = model_.theta(t, w);
  const Vec& theta = theta_const_ ? *theta_const_ : tmp;
  return driver_exponential(t, y, z, theta, model_.income_at(t, w), h(t),
                            problem_.gamma, problem_.alpha, problem_.beta,
                            scaled_set(t));
}

double ExponentialDriver::f(double t, const Vec& w, double y,
                            const Vec& z) const {
  return evaluate(t, w, y, z).f_value;
}

LogDriver::LogDriver(MarketModel model, UtilityProblem problem)
    : model_(std::move(model)), problem_(std::move(problem)) {
  model_.validate();
  if (problem_.family != UtilityFamily::Log)
    throw PreconditionViolated("LogDriver requires the log family");
  problem_.validate(model_);
  deterministic_ = model_.deterministic();
  if (model_.constant_coefficients())
    theta_const_ = model_.theta(0.0, Vec::Zero(model_.n));
}

ConsumptionMax LogDriver::consumption_max(double t) const {
  if (!(cache_t_ == t) || !cache_max_) {
    cache_max_ =
        argmax_consumption_log(problem_.consumption_set, problem_.alpha / h(t), t);
    cache_t_ = t;
  }
  return *cache_max_;
}

DriverEvaluation LogDriver::evaluate(double t, const Vec& w, double y) const {
  Vec tmp;
  if (!theta_const_) tmp = model_.theta(t, w);
  const Vec& theta = theta_const_ ? *theta_const_ : tmp;
  const double dist = set_distance(theta, problem_.investment_set.at(t));
  const ConsumptionMax m = consumption_max(t);
  DriverEvaluation out;
  out.dist_term = dist;
  out.consumption_term = m.value;
  out.f_value = 0.5 * dist * dist - 0.5 * theta.squaredNorm() -
                problem_.alpha * y / h(t) - m.value - model_.r -
                model_.income_at(t, w);
  return out;
}

double LogDriver::f(double t, const Vec& w, double y, const Vec&) const {
  return evaluate(t, w, y).f_value;
}

PowerDriver::PowerDriver(MarketModel model, UtilityProblem problem)
    : model_(std::move(model)), problem_(std::move(problem)) {
  model_.validate();
  if (problem_.family != UtilityFamily::Power)
    throw PreconditionViolated("PowerDriver requires the power family");
  problem_.validate(model_);
  deterministic_ = model_.deterministic();
  if (model_.constant_coefficients())
    theta_const_ = model_.theta(0.0, Vec::Zero(model_.n));
}

ConsumptionMax PowerDriver::consumption_max(double t, double y) const {
  return argmax_consumption_power(problem_.consumption_set, problem_.alpha,
                                  problem_.gamma, y, t);
}

DriverEvaluation PowerDriver::evaluate(double t, const Vec& w, double y,
                                       const Vec& z) const {
  Vec tmp;
  if (!theta_const_) tmp = model_.theta(t, w);
  const Vec& theta = theta_const_ ? *theta_const_ : tmp;
  return driver_power(t, y, z, theta, model_.income_at(t, w), model_.r,
                      problem_.alpha, problem_.beta, problem_.gamma,
                      problem_.investment_set, problem_.consumption_set);
}

double PowerDriver::f(double t, const Vec& w, double y, const Vec& z) const {
  return evaluate(t, w, y, z).f_value;
}

std::shared_ptr<const Driver> make_driver(const MarketModel& model,
                                          const UtilityProblem& problem) {
  switch (problem.family) {
    case UtilityFamily::Exponential:
      return std::make_shared<ExponentialDriver>(model, problem);
    case UtilityFamily::Log:
      return std::make_shared<LogDriver>(model, problem);
    case UtilityFamily::Power:
      return std::make_shared<PowerDriver>(model, problem);
  }
  throw PreconditionViolated("unknown utility family");
}

}  // namespace bsdeopt
