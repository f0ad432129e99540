#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bsdeopt/drivers.hpp"
#include "bsdeopt/errors.hpp"

using namespace bsdeopt;

namespace {

Vec vec1(double a) { return Vec::Constant(1, a); }

MarketModel simple_market(double mu = 0.05, double sigma = 0.2, double r = 0.0) {
  MarketModel m;
  m.n = m.m = 1;
  m.T = 1.0;
  m.r = r;
  m.mu = Vec(Vec::Constant(1, mu));
  m.sigma = Mat(Mat::Constant(1, 1, sigma));
  m.validate();
  return m;
}

ConstraintSet full1() { return ConstraintSet(1, Geometry{FullSpace{}}); }

UtilityProblem exp_problem(double gamma = 1.0) {
  UtilityProblem p;
  p.family = UtilityFamily::Exponential;
  p.gamma = gamma;
  return p;
}

UtilityProblem log_problem() {
  UtilityProblem p;
  p.family = UtilityFamily::Log;
  return p;
}

UtilityProblem power_problem(double gamma) {
  UtilityProblem p;
  p.family = UtilityFamily::Power;
  p.gamma = gamma;
  return p;
}

// Central-difference ODE residual, step chosen so truncation and roundoff
// both sit well below the 1e-8 acceptance bar.
double ode_residual(const std::function<double(double)>& h,
                    const std::function<double(double, double)>& rhs, double t) {
  const double d = 1e-5;
  const double hp = (h(t + d) - h(t - d)) / (2 * d);
  return std::abs(hp - rhs(t, h(t)));
}

}  // namespace

TEST_CASE("h_exponential closed forms and ODE residual") {
  for (double r : {0.0, 0.03, 0.4}) CHECK(h_exponential(1.0, r, 1.0) == 1.0);
  CHECK(h_exponential(0.0, 0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  for (double t : {0.0, 0.3, 1.7}) {
    CHECK(h_exponential(t, 0.0, 2.0) ==
          doctest::Approx(1.0 / (3.0 - t)).epsilon(1e-15));
    CHECK(h_exponential(t, 1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
  }
  // Continuity in r near zero (expm1 form has no cancellation).
  CHECK(h_exponential(0.3, 1e-12, 1.0) ==
        doctest::Approx(h_exponential(0.3, 0.0, 1.0)).epsilon(1e-9));

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ur(0.0, 0.15), uT(0.25, 3.0);
  for (int rep = 0; rep < 6; ++rep) {
    const double r = ur(rng), T = uT(rng);
    std::uniform_real_distribution<double> ut(0.01, T - 0.01);
    for (int i = 0; i < 100; ++i) {
      const double t = ut(rng);
      const double res = ode_residual(
          [&](double s) { return h_exponential(s, r, T); },
          [&](double, double hv) { return hv * (hv - r); }, t);
      CHECK(res < 1e-8);
    }
    CHECK(h_exponential(0.0, r, T) > 0);
  }

  CHECK_THROWS_AS(h_exponential(-0.1, 0.0, 1.0), OutOfRange);
  CHECK_THROWS_AS(h_exponential(1.1, 0.0, 1.0), OutOfRange);
  CHECK_THROWS_AS(h_exponential(0.5, -0.01, 1.0), OutOfRange);
  CHECK_THROWS_AS(h_exponential(0.0, 0.0, 0.0), OutOfRange);
}

TEST_CASE("h_log closed forms and ODE residual") {
  CHECK(h_log(1.0, 2.0, 0.0, 1.0) == 1.0);
  CHECK(h_log(0.0, 2.0, 0.0, 1.0) == doctest::Approx(3.0).epsilon(1e-15));
  for (double t : {0.0, 0.4, 0.9})
    CHECK(h_log(t, 1.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937 rng(8);
  std::uniform_real_distribution<double> ua(0.3, 3.0), ub(0.0, 1.5), uT(0.25, 3.0);
  for (int rep = 0; rep < 6; ++rep) {
    const double a = ua(rng), b = ub(rng), T = uT(rng);
    std::uniform_real_distribution<double> ut(0.01, T - 0.01);
    for (int i = 0; i < 100; ++i) {
      const double t = ut(rng);
      const double res = ode_residual(
          [&](double s) { return h_log(s, a, b, T); },
          [&](double, double hv) { return b * hv - a; }, t);
      CHECK(res < 1e-8);
    }
    CHECK(h_log(0.0, a, b, T) > 0);
  }

  CHECK_THROWS_AS(h_log(0.5, 1.0, -0.2, 1.0), NegativeBeta);
  CHECK_THROWS_AS(h_log(0.5, 0.0, 0.5, 1.0), OutOfRange);
  CHECK_THROWS_AS(h_log(2.0, 1.0, 0.0, 1.0), OutOfRange);
}

TEST_CASE("exponential driver values") {
  ConstraintSet full = full1();
  // Unconstrained: distance term absent.
  {
    const double t = 0.3, y = 0.4, h = 0.8, gamma = 2.0, alpha = 1.5, beta = 0.1;
    const double e = 0.05;
    const Vec z = vec1(-0.3), theta = vec1(0.25);
    auto ev = driver_exponential(t, y, z, theta, e, h, gamma, alpha, beta, full);
    CHECK(ev.dist_term == 0.0);
    const double expect = z.dot(theta) + theta.squaredNorm() / (2 * gamma) +
                          h * (e - y) + (h / gamma) * (std::log(h / alpha) - 1) +
                          beta / gamma;
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-14));
  }
  // q on the boundary of the scaled box: zero distance.
  {
    ConstraintSet hP(1, Geometry{Box{vec1(0.0), vec1(0.1)}});  // h = 1
    auto ev = driver_exponential(0.0, 0.0, vec1(0.0), vec1(0.2), 0.0, 1.0, 2.0,
                                 1.0, 0.0, hP);
    CHECK(ev.dist_term == doctest::Approx(0.0));
    const double expect = 0.2 * 0.2 / 4.0 + 1.0 * (0.0 - 0.0) + 0.5 * (0.0 - 1.0);
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-13));
  }
  // z = -theta/gamma and P = {0}: the quadratic penalty vanishes.
  {
    ConstraintSet zero(1, Geometry{FinitePointSet{{vec1(0.0)}}});
    const Vec theta = vec1(0.3);
    const double gamma = 1.5;
    const Vec z = -theta / gamma;
    auto ev = driver_exponential(0.2, -0.1, z, theta, 0.0, 0.9, gamma, 1.0, 0.0, zero);
    CHECK(ev.dist_term == doctest::Approx(0.0));
    const double expect = z.dot(theta) + theta.squaredNorm() / (2 * gamma) +
                          0.9 * 0.1 + (0.9 / gamma) * (std::log(0.9) - 1);
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-13));
  }
  // Binding scaled constraint, value recomputed independently.
  {
    ConstraintSet hP(1, Geometry{Box{vec1(0.0), vec1(0.05)}});  // h*[0,0.1], h=0.5
    const Vec z = vec1(0.1), theta = vec1(0.3);
    const double gamma = 2.0, h = 0.5, y = 0.2, e = 0.1, alpha = 0.7, beta = -0.2;
    auto ev = driver_exponential(0.1, y, z, theta, e, h, gamma, alpha, beta, hP);
    const double q = 0.1 + 0.3 / 2.0;  // 0.25, clamps to 0.05
    CHECK(ev.dist_term == doctest::Approx(q - 0.05).epsilon(1e-14));
    const double expect = -0.5 * gamma * (q - 0.05) * (q - 0.05) + 0.1 * 0.3 +
                          0.09 / (2 * gamma) + h * (e - y) +
                          (h / gamma) * (std::log(h / alpha) - 1) + beta / gamma;
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-13));
  }
  CHECK_THROWS_AS(driver_exponential(0, 0, vec1(0), vec1(0), 0, 0.0, 1, 1, 0, full),
                  PreconditionViolated);
  CHECK_THROWS_AS(driver_exponential(0, 0, vec1(0), vec1(0), 0, 1.0, -1, 1, 0, full),
                  OutOfRange);
}

TEST_CASE("log driver values") {
  ConstraintSet full = full1();
  // Unconstrained closed form.
  {
    const double t = 0.2, y = -0.3, h = 1.4, r = 0.02, alpha = 1.0, e = 0.01;
    const Vec theta = vec1(0.25);
    auto ev = driver_log(t, y, theta, e, h, r, alpha, full, full);
    const double w = alpha / h;
    const double expect = -0.5 * theta.squaredNorm() - alpha * y / h -
                          w * (std::log(w) - 1) - r - e;
    CHECK(ev.dist_term == 0.0);
    CHECK(ev.consumption_term == doctest::Approx(w * (std::log(w) - 1)).epsilon(1e-14));
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-13));
  }
  // theta = 0, alpha = h: the consumption max equals -1.
  {
    auto ev = driver_log(1.0, 0.7, vec1(0.0), 0.03, 1.0, 0.01, 1.0, full, full);
    CHECK(ev.f_value == doctest::Approx(-0.7 + 1.0 - 0.01 - 0.03).epsilon(1e-13));
  }
  // Singleton investment set at theta behaves like the identity projection.
  {
    ConstraintSet at_theta(1, Geometry{FinitePointSet{{vec1(0.25)}}});
    auto a = driver_log(0.1, 0.2, vec1(0.25), 0.0, 1.2, 0.0, 1.0, at_theta, full);
    auto b = driver_log(0.1, 0.2, vec1(0.25), 0.0, 1.2, 0.0, 1.0, full, full);
    CHECK(a.f_value == doctest::Approx(b.f_value).epsilon(1e-14));
  }
  // Binding box: squared distance contributes 0.0225.
  {
    ConstraintSet box(1, Geometry{Box{vec1(0.0), vec1(0.1)}});
    auto con = driver_log(0.0, 0.1, vec1(0.25), 0.0, 2.0, 0.0, 1.0, box, full);
    auto unc = driver_log(0.0, 0.1, vec1(0.25), 0.0, 2.0, 0.0, 1.0, full, full);
    CHECK(con.dist_term == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(con.f_value - unc.f_value == doctest::Approx(0.5 * 0.0225).epsilon(1e-12));
  }
}

TEST_CASE("power driver values") {
  ConstraintSet full = full1();
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> uy(-1.0, 1.0);
  // Unconstrained: consumption term has a closed form.
  for (double gamma : {0.5, -1.0}) {
    for (int rep = 0; rep < 10; ++rep) {
      const double y = uy(rng), alpha = 0.8, r = 0.02, e = 0.01, beta = 0.3;
      const Vec z = vec1(uy(rng)), theta = vec1(0.25);
      auto ev = driver_power(0.2, y, z, theta, e, r, alpha, beta, gamma, full, full);
      const double om = 1.0 - gamma;
      const double kappa = 1.0 / om;
      const double M = (om / gamma) * std::pow(alpha, kappa) * std::exp(kappa * y);
      CHECK(ev.consumption_term == doctest::Approx(M).epsilon(1e-12));
      const double expect =
          gamma * (-(z + theta).squaredNorm() / (2 * om) -
                   z.squaredNorm() / (2 * gamma) - M - r - e + beta / gamma);
      CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  // z = -theta: only the |z|^2 and consumption parts remain.
  {
    const double gamma = 0.5;
    const Vec theta = vec1(0.4);
    auto ev = driver_power(0.0, 0.0, Vec(-theta), theta, 0.0, 0.0, 1.0, 0.0,
                           gamma, full, full);
    const double M = (0.5 / 0.5) * std::pow(1.0, 2.0) * 1.0;
    CHECK(ev.f_value ==
          doctest::Approx(-0.5 * theta.squaredNorm() - gamma * M).epsilon(1e-13));
  }
  // Nonconvex set: q = 0.4 projects to the nearer branch point 0.
  {
    ConstraintSet pts(1, Geometry{FinitePointSet{{vec1(0.0), vec1(1.0)}}});
    const double gamma = 0.5;
    auto ev = driver_power(0.0, 0.0, vec1(0.0), vec1(0.2), 0.0, 0.0, 1.0, 0.0,
                           gamma, pts, full);
    CHECK(ev.dist_term == doctest::Approx(0.4).epsilon(1e-14));
    const double M = 1.0;
    const double expect = gamma * (0.5 * 0.5 * 0.16 - 0.04 / (2 * 0.5) - M) - 0.0;
    CHECK(ev.f_value == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(
      driver_power(0, 0, vec1(0), vec1(0), 0, 0, 1.0, 0, 0.0, full, full), OutOfRange);
  CHECK_THROWS_AS(
      driver_power(0, 0, vec1(0), vec1(0), 0, 0, 1.0, 0, 1.0, full, full), OutOfRange);
  CHECK_THROWS_AS(
      driver_power(0, 0, vec1(0), vec1(0), 0, 0, 1.0, 0, 1.5, full, full), OutOfRange);
}

TEST_CASE("driver classes agree with the free functions") {
  MarketModel m = simple_market();
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> u(-1.0, 1.0), ut(0.0, 1.0);

  {
    UtilityProblem p = exp_problem(2.0);
    p.investment_set = ConstraintSet(1, Geometry{Box{vec1(0.0), vec1(0.1)}});
    p.alpha = 1.2;
    p.beta = 0.1;
    ExponentialDriver d(m, p);
    CHECK(d.deterministic());
    for (int rep = 0; rep < 40; ++rep) {
      const double t = ut(rng), y = u(rng);
      const Vec z = vec1(u(rng));
      const Vec theta = m.theta(t, Vec::Zero(1));
      const double h = h_exponential(t, m.r, m.T);
      auto expect = driver_exponential(t, y, z, theta, 0.0, h, p.gamma, p.alpha,
                                       p.beta, scale(p.investment_set, h));
      CHECK(d.f(t, Vec::Zero(1), y, z) ==
            doctest::Approx(expect.f_value).epsilon(1e-14));
    }
    // Cache correctness under alternating evaluation times.
    const double a1 = d.f(0.25, Vec::Zero(1), 0.1, vec1(0.2));
    (void)d.f(0.75, Vec::Zero(1), 0.1, vec1(0.2));
    CHECK(d.f(0.25, Vec::Zero(1), 0.1, vec1(0.2)) == a1);
  }
  {
    UtilityProblem p = log_problem();
    p.investment_set = ConstraintSet(1, Geometry{Box{vec1(0.0), vec1(0.1)}});
    p.consumption_set = ConstraintSet(1, Geometry{Box{vec1(0.2), vec1(0.6)}});
    LogDriver d(m, p);
    for (int rep = 0; rep < 40; ++rep) {
      const double t = ut(rng), y = u(rng);
      const Vec theta = m.theta(t, Vec::Zero(1));
      auto expect = driver_log(t, y, theta, 0.0, d.h(t), m.r, p.alpha,
                               p.investment_set, p.consumption_set);
      CHECK(d.f(t, Vec::Zero(1), y, vec1(99.0)) ==  // z ignored
            doctest::Approx(expect.f_value).epsilon(1e-14));
    }
  }
  {
    UtilityProblem p = power_problem(-1.0);
    p.investment_set = ConstraintSet(1, Geometry{FinitePointSet{{vec1(0.0), vec1(0.3)}}});
    p.consumption_set = ConstraintSet(1, Geometry{Box{vec1(0.1), vec1(2.0)}});
    PowerDriver d(m, p);
    for (int rep = 0; rep < 40; ++rep) {
      const double t = ut(rng), y = u(rng);
      const Vec z = vec1(u(rng));
      const Vec theta = m.theta(t, Vec::Zero(1));
      auto expect = driver_power(t, y, z, theta, 0.0, m.r, p.alpha, p.beta,
                                 p.gamma, p.investment_set, p.consumption_set);
      CHECK(d.f(t, Vec::Zero(1), y, z) ==
            doctest::Approx(expect.f_value).epsilon(1e-14));
    }
  }

  auto dr = make_driver(m, log_problem());
  CHECK(dynamic_cast<const LogDriver*>(dr.get()) != nullptr);
  CHECK(dr->dim() == 1);
  CHECK_THROWS_AS(ExponentialDriver(m, log_problem()), PreconditionViolated);
}

TEST_CASE("problem validation") {
  MarketModel m = simple_market();
  {
    UtilityProblem p = exp_problem();
    p.consumption_set = ConstraintSet(1, Geometry{Box{vec1(0.0), vec1(1.0)}});
    CHECK_THROWS_AS(p.validate(m), PreconditionViolated);
  }
  {
    UtilityProblem p = exp_problem(-0.5);
    CHECK_THROWS_AS(p.validate(m), OutOfRange);
  }
  for (double g : {0.0, 1.0, 2.0}) {
    UtilityProblem p = power_problem(g);
    CHECK_THROWS_AS(p.validate(m), OutOfRange);
  }
  {
    UtilityProblem p = log_problem();
    p.x = 0.0;
    CHECK_THROWS_AS(p.validate(m), OutOfRange);
    p.x = 1.0;
    p.beta = -0.1;
    CHECK_THROWS_AS(p.validate(m), NegativeBeta);
  }
  {
    UtilityProblem p = log_problem();
    p.terminal_endowment = 0.5;
    CHECK_THROWS_AS(p.validate(m), PreconditionViolated);
  }
  {
    UtilityProblem p = log_problem();
    p.investment_set = ConstraintSet(2, Geometry{FullSpace{}});
    CHECK_THROWS_AS(p.validate(m), ShapeMismatch);
  }
  {  // income accounting convention must match the family
    MarketModel mi = simple_market();
    mi.income = ScalarCoefficient{0.1};
    mi.income_bound = -1;
    mi.income_is_relative = true;
    mi.validate();
    CHECK_THROWS_AS(exp_problem().validate(mi), PreconditionViolated);
    CHECK_NOTHROW(log_problem().validate(mi));
    mi.income_is_relative = false;
    mi.validate();
    CHECK_NOTHROW(exp_problem().validate(mi));
    CHECK_THROWS_AS(log_problem().validate(mi), PreconditionViolated);
  }
}

TEST_CASE("quadratic growth and local Lipschitz bounds, exponential driver") {
  MarketModel m = simple_market();  // theta = 0.25
  UtilityProblem p = exp_problem(1.5);
  p.alpha = 0.8;
  p.beta = 0.2;
  MarketModel me = m;
  me.income = ScalarCoefficient{0.3};
  me.income_bound = -1;  // re-derive for the new income level
  me.validate();
  p.investment_set = ConstraintSet(1, Geometry{Box{vec1(0.0), vec1(0.1)}});
  ExponentialDriver d(me, p);

  const double tbar = 0.25, hbar = 1.0, ebar = 0.3;
  const double c = tbar / p.gamma;  // 0 lies in hP, so dist(q, hP) <= |q| + 0
  double mlog = 0;
  for (int i = 0; i <= 20; ++i) {
    const double h = h_exponential(i / 20.0, me.r, me.T);
    mlog = std::max(mlog, (h / p.gamma) * std::abs(std::log(h / p.alpha) - 1));
  }
  const double K_growth =
      std::max({p.gamma + tbar / 2,
                p.gamma * c * c + tbar / 2 + tbar * tbar / (2 * p.gamma) +
                    hbar * ebar + mlog + std::abs(p.beta) / p.gamma,
                hbar});
  const double K_lip = hbar + p.gamma * (0.5 + c) + tbar;

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> uy(-5, 5), uz(-6, 6), ut(0, 1);
  for (int rep = 0; rep < 1000; ++rep) {
    const double t = ut(rng), y1 = uy(rng), y2 = uy(rng);
    const Vec z1 = vec1(uz(rng)), z2 = vec1(uz(rng));
    const double f1 = d.f(t, Vec::Zero(1), y1, z1);
    CHECK(std::abs(f1) <=
          K_growth * (1 + std::abs(y1) + z1.squaredNorm()) * (1 + 1e-12));
    const double f2 = d.f(t, Vec::Zero(1), y2, z2);
    CHECK(std::abs(f1 - f2) <=
          K_lip * (std::abs(y1 - y2) +
                   (1 + z1.norm() + z2.norm()) * (z1 - z2).norm()) +
              1e-12);
  }

  CHECK(d.sampled_growth_constant(1.0) > 0);
  FunctionDriver fd(1, true, [](double, const Vec&, double y, const Vec& z) {
    return 1 + std::abs(y) + z.squaredNorm();
  });
  CHECK(fd.sampled_growth_constant(1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("drivers decrease in y") {
  MarketModel m = simple_market();
  ConstraintSet box(1, Geometry{Box{vec1(0.0), vec1(0.1)}});

  UtilityProblem pe = exp_problem(2.0);
  ExponentialDriver de(m, pe);
  UtilityProblem pl = log_problem();
  LogDriver dl(m, pl);
  UtilityProblem pp1 = power_problem(0.5);
  PowerDriver dp1(m, pp1);
  UtilityProblem pp2 = power_problem(-2.0);
  pp2.consumption_set = box;  // constrained consumption keeps the property
  PowerDriver dp2(m, pp2);

  std::mt19937 rng(37);
  std::uniform_real_distribution<double> uy(-2, 2), ut(0, 1);
  const Vec w = Vec::Zero(1), z = vec1(0.3);
  for (int rep = 0; rep < 200; ++rep) {
    const double t = ut(rng), y = uy(rng), dy = 0.05;
    CHECK(de.f(t, w, y + dy, z) < de.f(t, w, y, z));
    CHECK(dl.f(t, w, y + dy, z) < dl.f(t, w, y, z));
    CHECK(dp1.f(t, w, y + dy, z) < dp1.f(t, w, y, z));
    CHECK(dp2.f(t, w, y + dy, z) <= dp2.f(t, w, y, z) + 1e-15);
  }
}

TEST_CASE("distance term shrinks when the set grows") {
  ConstraintSet small(1, Geometry{Box{vec1(0.0), vec1(0.1)}});
  ConstraintSet mid(1, Geometry{Box{vec1(-1.0), vec1(1.0)}});
  ConstraintSet pts(1, Geometry{FinitePointSet{{vec1(0.0), vec1(0.3)}}});
  ConstraintSet hull(1, Geometry{Box{vec1(0.0), vec1(0.3)}});
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int rep = 0; rep < 200; ++rep) {
    const Vec q = vec1(u(rng));
    CHECK(set_distance(q, small.base()) >= set_distance(q, mid.base()) - 1e-15);
    CHECK(set_distance(q, mid.base()) >= 0.0);
    CHECK(set_distance(q, pts.base()) >= set_distance(q, hull.base()) - 1e-15);
  }
}
