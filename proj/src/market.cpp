#include "bsdeopt/market.hpp"

#include <fmt/format.h>

#include <cmath>

#include "bsdeopt/philox.hpp"

namespace bsdeopt {

Vec risk_premium(const Mat& sigma, const Vec& mu, double r, double eig_min) {
  const auto m = sigma.rows();
  const auto n = sigma.cols();
  if (mu.size() != m)
    throw ShapeMismatch(fmt::format("risk_premium: mu has size {}, sigma is {}x{}",
                                    mu.size(), m, n));
  if (m > n)
    throw ShapeMismatch(fmt::format("risk_premium: more stocks ({}) than Brownian factors ({})",
                                    m, n));
  const Mat a = sigma * sigma.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> eig(a);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < eig_min)
    throw SingularVolatility(fmt::format(
        "risk_premium: min eigenvalue of sigma*sigma^T = {} below gate {}",
        eig.eigenvalues().minCoeff(), eig_min));
  const Vec excess = mu.array() - r;
  return sigma.transpose() * a.ldlt().solve(excess);
}

void MarketModel::validate() {
  if (n < 1 || m < 1) throw ShapeMismatch("market: n and m must be >= 1");
  if (m > n) throw ShapeMismatch("market: requires m <= n");
  if (!(T > 0)) throw OutOfRange("market: T must be positive");
  if (r < 0) throw OutOfRange("market: r must be >= 0");
  if (eig_min <= 0) throw OutOfRange("market: eig_min must be positive");

  const Vec w0 = Vec::Zero(n);
  const Vec mu0 = mu(0.0, w0);
  const Mat s0 = sigma(0.0, w0);
  if (mu0.size() != m) throw ShapeMismatch("market: mu dimension != m");
  if (s0.rows() != m || s0.cols() != n) throw ShapeMismatch("market: sigma is not m x n");

  const Vec th0 = risk_premium(s0, mu0, r, eig_min);

  // Derive unset bounds from the t=0 evaluation (exact for constants; callers
  // with genuinely varying coefficients should declare their own bounds).
  constexpr double slack = 1e-9;
  if (mu_bound < 0) mu_bound = mu0.lpNorm<Eigen::Infinity>() + slack;
  if (sigma_bound < 0) sigma_bound = s0.lpNorm<Eigen::Infinity>() + slack;
  if (theta_bound < 0) theta_bound = th0.lpNorm<Eigen::Infinity>() + slack;
  if (income_bound < 0) income_bound = std::abs(income(0.0, w0)) + slack;

  theta_constant_ = mu.is_constant() && sigma.is_constant();
  if (theta_constant_) theta_cache_ = th0;
  validated_ = true;
}

namespace {
void check_bound(double value, double bound, const char* what) {
  if (!(value <= bound))
    throw BoundViolation(fmt::format("market: |{}| = {} exceeds declared bound {}",
                                     what, value, bound));
}
}  // namespace

Vec MarketModel::mu_at(double t, const Vec& w) const {
  Vec v = mu(t, w);
  check_bound(v.lpNorm<Eigen::Infinity>(), mu_bound, "mu");
  return v;
}

Mat MarketModel::sigma_at(double t, const Vec& w) const {
  Mat s = sigma(t, w);
  check_bound(s.lpNorm<Eigen::Infinity>(), sigma_bound, "sigma");
  return s;
}

double MarketModel::income_at(double t, const Vec& w) const {
  double e = income(t, w);
  check_bound(std::abs(e), income_bound, "income");
  return e;
}

Vec MarketModel::theta(double t, const Vec& w) const {
  if (!validated_) throw PreconditionViolated("market: validate() not called");
  if (theta_constant_) return theta_cache_;
  Vec th = risk_premium(sigma(t, w), mu(t, w), r, eig_min);
  check_bound(th.lpNorm<Eigen::Infinity>(), theta_bound, "theta");
  return th;
}

const Mat& BrownianBatch::states() const {
  if (!states_) {
    const int np = path_count(), ns = steps();
    auto st = std::make_shared<Mat>(np, (ns + 1) * n);
    st->leftCols(n).setZero();
    for (int k = 0; k < ns; ++k)
      st->middleCols((k + 1) * n, n) =
          st->middleCols(k * n, n) + incr.middleCols(k * n, n);
    states_ = std::move(st);
  }
  return *states_;
}

std::vector<double> uniform_grid(double T, int steps) {
  if (steps < 1 || !(T > 0)) throw BadGrid("uniform_grid: need steps >= 1 and T > 0");
  std::vector<double> g(steps + 1);
  for (int k = 0; k <= steps; ++k) g[k] = T * k / steps;
  g[steps] = T;
  return g;
}

namespace {
void validate_grid(const std::vector<double>& grid) {
  if (grid.size() < 2) throw BadGrid("grid needs at least two points");
  if (grid.front() != 0.0) throw BadGrid("grid must start at t = 0");
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    if (!(grid[k + 1] > grid[k])) throw BadGrid("grid must be strictly increasing");
}
}  // namespace

BrownianBatch sample_brownian(std::uint64_t seed, std::vector<double> grid, int n,
                              int path_count) {
  validate_grid(grid);
  if (n < 1) throw ShapeMismatch("sample_brownian: n must be >= 1");
  if (path_count < 0) throw PreconditionViolated("sample_brownian: negative path_count");

  BrownianBatch b;
  b.grid = std::move(grid);
  b.n = n;
  b.seed = seed;
  const int ns = b.steps();
  b.incr.resize(path_count, ns * n);
  for (int i = 0; i < path_count; ++i)
    for (int k = 0; k < ns; ++k) {
      const double root_dt = std::sqrt(b.dt(k));
      for (int j = 0; j < n; ++j)
        b.incr(i, k * n + j) =
            root_dt * philox_normal(seed, static_cast<std::uint64_t>(i),
                                    static_cast<std::uint32_t>(k),
                                    static_cast<std::uint32_t>(j));
    }
  return b;
}

BrownianBatch girsanov_drift_adjust(const BrownianBatch& b,
                                    const std::vector<Vec>& theta_per_step) {
  if (static_cast<int>(theta_per_step.size()) != b.steps())
    throw ShapeMismatch("girsanov_drift_adjust: need one theta per step");
  BrownianBatch out = b;
  for (int k = 0; k < b.steps(); ++k) {
    const Vec& th = theta_per_step[k];
    if (th.size() != b.n) throw ShapeMismatch("girsanov_drift_adjust: theta dimension != n");
    const double dt = b.dt(k);
    for (int j = 0; j < b.n; ++j)
      out.incr.col(k * b.n + j).array() += th[j] * dt;
  }
  return out;
}

}  // namespace bsdeopt
