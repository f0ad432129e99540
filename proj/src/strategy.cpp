#include "bsdeopt/strategy.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <variant>

#include "bsdeopt/csv.hpp"

namespace bsdeopt {

namespace {

// Shared state captured by the rule closures.  The copies are cheap (the
// solution holds grids and regression coefficients, not path data) and make
// the strategy safe to evaluate after the caller's originals are gone.  The
// single-entry caches exploit the simulators' access pattern: all paths of a
// step are evaluated consecutively, so per-step deterministic quantities are
// computed once.
struct RuleContext {
  MarketModel model;
  UtilityProblem problem;
  BsdeSolution solution;
  bool det_market = false;

  mutable int theta_step = -1;
  mutable Vec theta_cache;

  mutable int cons_step = -1;
  mutable double cons_y = 0.0;
  mutable double cons_cache = 0.0;

  mutable int inv_step = -1;
  mutable Vec inv_cache;

  Vec theta(int k, double t, const Vec& w) const {
    if (!det_market) return model.theta(t, w);
    if (k != theta_step) {
      theta_cache = model.theta(t, w);
      theta_step = k;
    }
    return theta_cache;
  }
};

using Ctx = std::shared_ptr<RuleContext>;

bool unconstrained(const ConstraintSet& set) {
  return !set.time_dependent() &&
         std::holds_alternative<FullSpace>(set.base().shape);
}

Strategy exponential_rules(const Ctx& ctx) {
  const double gamma = ctx->problem.gamma;
  const double alpha = ctx->problem.alpha;
  const double r = ctx->model.r;
  const double T = ctx->model.T;
  const bool p_free = unconstrained(ctx->problem.investment_set);

  Strategy s;
  s.kind = UtilityFamily::Exponential;
  s.relative = false;
  s.consumption = [ctx, gamma, alpha, r, T](int k, double t, double x,
                                            const Vec& w) {
    const double h = h_exponential(t, r, T);
    return h * x + ctx->solution.y_at(k, w) - std::log(h / alpha) / gamma;
  };
  // proj_{hP}(z + theta/gamma) / h == proj_P((z + theta/gamma) / h): the
  // scaling identity lets the rule project onto the unscaled set.
  s.investment = [ctx, gamma, r, T, p_free](int k, double t, double /*x*/,
                                            const Vec& w) {
    const double h = h_exponential(t, r, T);
    Vec q = (ctx->solution.z_at(k, w) + ctx->theta(k, t, w) / gamma) / h;
    if (p_free) return q;
    return Vec(project(q, ctx->problem.investment_set, t).nearest);
  };
  return s;
}

Strategy log_rules(const Ctx& ctx) {
  const double alpha = ctx->problem.alpha;
  const double beta = ctx->problem.beta;
  const double T = ctx->model.T;
  const bool p_free = unconstrained(ctx->problem.investment_set);

  Strategy s;
  s.kind = UtilityFamily::Log;
  s.relative = true;
  // Depends on t alone, so one evaluation per step serves every path.
  s.consumption = [ctx, alpha, beta, T](int k, double t, double /*x*/,
                                        const Vec& /*w*/) {
    if (k != ctx->cons_step) {
      const double h = h_log(t, alpha, beta, T);
      ctx->cons_cache =
          argmax_consumption_log(ctx->problem.consumption_set, alpha / h, t).c;
      ctx->cons_step = k;
    }
    return ctx->cons_cache;
  };
  s.investment = [ctx, p_free](int k, double t, double /*x*/, const Vec& w) {
    if (p_free) return Vec(ctx->theta(k, t, w));
    if (ctx->det_market) {
      if (k != ctx->inv_step) {
        ctx->inv_cache =
            project(ctx->theta(k, t, w), ctx->problem.investment_set, t).nearest;
        ctx->inv_step = k;
      }
      return ctx->inv_cache;
    }
    return Vec(project(ctx->model.theta(t, w), ctx->problem.investment_set, t)
                   .nearest);
  };
  return s;
}

Strategy power_rules(const Ctx& ctx) {
  const double gamma = ctx->problem.gamma;
  const double alpha = ctx->problem.alpha;
  const bool p_free = unconstrained(ctx->problem.investment_set);

  Strategy s;
  s.kind = UtilityFamily::Power;
  s.relative = true;
  s.consumption = [ctx, gamma, alpha](int k, double t, double /*x*/,
                                      const Vec& w) {
    const double y = ctx->solution.y_at(k, w);
    if (k != ctx->cons_step || y != ctx->cons_y) {
      ctx->cons_cache =
          argmax_consumption_power(ctx->problem.consumption_set, alpha, gamma,
                                   y, t)
              .c;
      ctx->cons_step = k;
      ctx->cons_y = y;
    }
    return ctx->cons_cache;
  };
  s.investment = [ctx, gamma, p_free](int k, double t, double /*x*/,
                                      const Vec& w) {
    Vec q = (ctx->solution.z_at(k, w) + ctx->theta(k, t, w)) / (1.0 - gamma);
    if (p_free) return q;
    return Vec(project(q, ctx->problem.investment_set, t).nearest);
  };
  return s;
}

bool family_matches(const Driver* d, UtilityFamily family) {
  switch (family) {
    case UtilityFamily::Exponential:
      return dynamic_cast<const ExponentialDriver*>(d) != nullptr;
    case UtilityFamily::Log:
      return dynamic_cast<const LogDriver*>(d) != nullptr;
    case UtilityFamily::Power:
      return dynamic_cast<const PowerDriver*>(d) != nullptr;
  }
  return false;
}

void append_source(Strategy& s, const std::string& token) {
  s.source = (s.source == "optimal") ? token : s.source + "+" + token;
}

bool zero_income(const MarketModel& m) {
  return m.income.is_constant() && m.income(0.0, Vec()) == 0.0;
}

void check_batch(const MarketModel& m, const BrownianBatch& batch) {
  if (batch.n != m.n)
    throw ShapeMismatch("simulate_wealth: batch dimension " +
                        std::to_string(batch.n) + " != market dimension " +
                        std::to_string(m.n));
  if (batch.steps() < 1 || batch.path_count() < 1)
    throw BadGrid("simulate_wealth: batch has no steps or no paths");
  if (std::abs(batch.grid.front()) > 1e-12 ||
      std::abs(batch.grid.back() - m.T) > 1e-12 * std::max(1.0, m.T))
    throw BadGrid("simulate_wealth: batch grid must cover [0, T]");
}

void check_rules(const Strategy& strategy) {
  if (!strategy.consumption || !strategy.investment)
    throw PreconditionViolated("simulate_wealth: strategy rules are not set");
}

}  // namespace

Strategy optimal_strategy(const MarketModel& model, const UtilityProblem& problem,
                          const BsdeSolution& solution) {
  if (!solution.driver)
    throw PreconditionViolated("optimal_strategy: solution has no driver attached");
  if (!family_matches(solution.driver.get(), problem.family))
    throw PreconditionViolated(
        "optimal_strategy: solution was produced for a different utility family");

  auto ctx = std::make_shared<RuleContext>();
  ctx->model = model;
  ctx->model.validate();
  ctx->problem = problem;
  ctx->problem.validate(ctx->model);
  ctx->solution = solution;
  ctx->det_market = ctx->model.deterministic();

  const Eigen::Index last = ctx->solution.grid.size() - 1;
  if (last < 1 || std::abs(ctx->solution.grid[last] - ctx->model.T) >
                      1e-12 * std::max(1.0, ctx->model.T))
    throw PreconditionViolated(
        "optimal_strategy: solution grid does not end at the model horizon");

  switch (problem.family) {
    case UtilityFamily::Exponential:
      return exponential_rules(ctx);
    case UtilityFamily::Log:
      return log_rules(ctx);
    case UtilityFamily::Power:
      return power_rules(ctx);
  }
  throw PreconditionViolated("optimal_strategy: unknown utility family");
}

Strategy scale_consumption(Strategy s, double factor) {
  check_rules(s);
  auto base = std::move(s.consumption);
  s.consumption = [base, factor](int k, double t, double x, const Vec& w) {
    return factor * base(k, t, x, w);
  };
  append_source(s, "c_scale:" + format_double(factor));
  return s;
}

Strategy shift_consumption(Strategy s, double delta) {
  check_rules(s);
  auto base = std::move(s.consumption);
  s.consumption = [base, delta](int k, double t, double x, const Vec& w) {
    return base(k, t, x, w) + delta;
  };
  append_source(s, "c_shift:" + format_double(delta));
  return s;
}

Strategy scale_investment(Strategy s, double factor) {
  check_rules(s);
  auto base = std::move(s.investment);
  s.investment = [base, factor](int k, double t, double x, const Vec& w) {
    return Vec(factor * base(k, t, x, w));
  };
  append_source(s, "p_scale:" + format_double(factor));
  return s;
}

Strategy constant_investment(Strategy s, Vec p) {
  check_rules(s);
  std::string token = "p_const:";
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (j) token += ";";
    token += format_double(p[j]);
  }
  s.investment = [p](int, double, double, const Vec&) { return p; };
  append_source(s, token);
  return s;
}

WealthPathSet simulate_wealth_additive(const Strategy& strategy,
                                       const MarketModel& model,
                                       const BrownianBatch& batch, double x0) {
  if (strategy.kind != UtilityFamily::Exponential)
    throw PreconditionViolated(
        "simulate_wealth_additive: exponential-family strategies only");
  check_rules(strategy);
  MarketModel m = model;
  m.validate();
  check_batch(m, batch);
  if (m.income_is_relative && !zero_income(m))
    throw PreconditionViolated(
        "simulate_wealth_additive: income must be an absolute rate");

  const int paths = batch.path_count();
  const int N = batch.steps();
  const int n = batch.n;

  WealthPathSet out;
  out.grid = Eigen::Map<const Vec>(batch.grid.data(),
                                   static_cast<Eigen::Index>(batch.grid.size()));
  out.seed = batch.seed;
  out.relative_controls = false;
  out.x.resize(paths, N + 1);
  out.c.resize(paths, N + 1);
  out.p.resize(paths, N * n);
  out.x.col(0).setConstant(x0);

  const bool det = m.deterministic();
  const Vec w_zero = Vec::Zero(n);
  for (int k = 0; k < N; ++k) {
    const double t = batch.grid[k];
    const double dt = batch.dt(k);
    Vec theta_k;
    double e_k = 0.0;
    if (det) {
      theta_k = m.theta(t, w_zero);
      e_k = m.income_at(t, w_zero);
    }
    for (int i = 0; i < paths; ++i) {
      const Vec w = batch.state_vec(i, k);
      const Vec theta = det ? theta_k : m.theta(t, w);
      const double e = det ? e_k : m.income_at(t, w);
      const double x = out.x(i, k);
      const double c = strategy.consumption(k, t, x, w);
      const Vec p = strategy.investment(k, t, x, w);
      if (p.size() != n)
        throw ShapeMismatch("investment rule returned dimension " +
                            std::to_string(p.size()) + ", expected " +
                            std::to_string(n));
      const Vec dw = batch.incr_vec(i, k);
      const double xn =
          x + x * m.r * dt + p.dot(dw + theta * dt) + (e - c) * dt;
      out.c(i, k) = c;
      out.p.row(i).segment(k * n, n) = p.transpose();
      out.x(i, k + 1) = xn;
      if (!(xn > 0.0)) ++out.nonpositive_wealth;
    }
  }
  const double T = batch.grid[N];
  for (int i = 0; i < paths; ++i)
    out.c(i, N) = strategy.consumption(N, T, out.x(i, N), batch.state_vec(i, N));
  return out;
}

WealthPathSet simulate_wealth_multiplicative(const Strategy& strategy,
                                             const MarketModel& model,
                                             const BrownianBatch& batch,
                                             double x0) {
  if (strategy.kind == UtilityFamily::Exponential)
    throw PreconditionViolated(
        "simulate_wealth_multiplicative: log/power-family strategies only");
  check_rules(strategy);
  if (!(x0 > 0.0))
    throw OutOfRange("simulate_wealth_multiplicative: initial wealth must be > 0");
  MarketModel m = model;
  m.validate();
  check_batch(m, batch);
  if (!m.income_is_relative && !zero_income(m))
    throw PreconditionViolated(
        "simulate_wealth_multiplicative: income must be relative to wealth");

  const int paths = batch.path_count();
  const int N = batch.steps();
  const int n = batch.n;

  WealthPathSet out;
  out.grid = Eigen::Map<const Vec>(batch.grid.data(),
                                   static_cast<Eigen::Index>(batch.grid.size()));
  out.seed = batch.seed;
  out.relative_controls = true;
  out.x.resize(paths, N + 1);
  out.c.resize(paths, N + 1);
  out.p.resize(paths, N * n);
  out.x.col(0).setConstant(x0);

  const bool det = m.deterministic();
  const Vec w_zero = Vec::Zero(n);
  for (int k = 0; k < N; ++k) {
    const double t = batch.grid[k];
    const double dt = batch.dt(k);
    Vec theta_k;
    double e_k = 0.0;
    if (det) {
      theta_k = m.theta(t, w_zero);
      e_k = m.income_at(t, w_zero);
    }
    for (int i = 0; i < paths; ++i) {
      const Vec w = batch.state_vec(i, k);
      const Vec theta = det ? theta_k : m.theta(t, w);
      const double e = det ? e_k : m.income_at(t, w);
      const double x = out.x(i, k);
      const double c = strategy.consumption(k, t, x, w);
      const Vec p = strategy.investment(k, t, x, w);
      if (p.size() != n)
        throw ShapeMismatch("investment rule returned dimension " +
                            std::to_string(p.size()) + ", expected " +
                            std::to_string(n));
      const Vec dwq = batch.incr_vec(i, k) + theta * dt;
      const double growth =
          p.dot(dwq) - 0.5 * p.squaredNorm() * dt + (m.r + e - c) * dt;
      out.c(i, k) = c;
      out.p.row(i).segment(k * n, n) = p.transpose();
      out.x(i, k + 1) = x * std::exp(growth);
    }
  }
  const double T = batch.grid[N];
  for (int i = 0; i < paths; ++i)
    out.c(i, N) = strategy.consumption(N, T, out.x(i, N), batch.state_vec(i, N));
  return out;
}

void export_paths_csv(const WealthPathSet& paths, const std::string& file,
                      int path_budget) {
  const int budget = std::min(path_budget, paths.path_count());
  if (budget < 1) throw OutOfRange("export_paths_csv: path budget must be >= 1");
  const int N = paths.steps();
  const int n = N > 0 ? static_cast<int>(paths.p.cols()) / N : 0;

  CsvWriter out(file);
  std::vector<std::string> header{"t"};
  for (int i = 0; i < budget; ++i) header.push_back("x_" + std::to_string(i));
  for (int i = 0; i < budget; ++i) header.push_back("c_" + std::to_string(i));
  for (int i = 0; i < budget; ++i)
    for (int j = 0; j < n; ++j)
      header.push_back("p_" + std::to_string(i) + "_" + std::to_string(j));
  out.row(header);

  std::vector<double> row;
  for (int k = 0; k <= N; ++k) {
    row.clear();
    row.push_back(paths.grid[k]);
    for (int i = 0; i < budget; ++i) row.push_back(paths.x(i, k));
    for (int i = 0; i < budget; ++i) row.push_back(paths.c(i, k));
    for (int i = 0; i < budget; ++i)
      for (int j = 0; j < n; ++j)
        row.push_back(k < N ? paths.p(i, k * n + j) : 0.0);  // no control at T
    out.numeric_row(row);
  }
}

}  // namespace bsdeopt
