#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "bsdeopt/market.hpp"
#include "bsdeopt/philox.hpp"

using namespace bsdeopt;

// Independent oracle: theta = pinv(sigma) * (mu - r*1) via SVD.  For full
// row rank sigma this equals sigma^T (sigma sigma^T)^{-1} (mu - r*1).
static Vec theta_oracle(const Mat& sigma, const Vec& mu, double r) {
  Eigen::JacobiSVD<Mat> svd(sigma, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec inv_sv = svd.singularValues();
  for (int i = 0; i < inv_sv.size(); ++i) inv_sv[i] = 1.0 / inv_sv[i];
  const Vec excess = mu.array() - r;
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose() * excess;
}

TEST_CASE("risk premium: frozen single-stock two-factor value") {
  // sigma = [0.2 0], mu - r = 0.04  =>  theta = (0.2, 0); frozen from the
  // SVD oracle before implementation.
  Mat sigma(1, 2);
  sigma << 0.2, 0.0;
  Vec mu(1);
  mu << 0.04;
  const Vec th = risk_premium(sigma, mu, 0.0);
  CHECK(th.size() == 2);
  CHECK(th[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(th[1] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("risk premium matches pseudo-inverse oracle on random markets") {
  std::mt19937 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 1 + static_cast<int>(rng() % 4);
    const int m = 1 + static_cast<int>(rng() % n);
    Mat sigma(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) sigma(i, j) = 0.15 * g(rng);
    sigma += 0.3 * Mat::Identity(m, n);  // keep rows independent
    Vec mu(m);
    for (int i = 0; i < m; ++i) mu[i] = 0.08 * g(rng);
    const double r = 0.02;
    const Vec th = risk_premium(sigma, mu, r);
    const Vec ref = theta_oracle(sigma, mu, r);
    CHECK((th - ref).lpNorm<Eigen::Infinity>() < 1e-10);
    // theta solves sigma * theta = mu - r*1 in the least-norm sense.
    CHECK((sigma * th - (mu.array() - r).matrix()).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("risk premium rejects degenerate volatility and bad shapes") {
  Mat sigma(2, 2);
  sigma << 0.2, 0.0, 0.2, 0.0;  // duplicated row -> singular sigma*sigma^T
  Vec mu(2);
  mu << 0.05, 0.05;
  CHECK_THROWS_AS(risk_premium(sigma, mu, 0.0), SingularVolatility);

  Mat tiny(1, 1);
  tiny << 1e-6;  // sigma*sigma^T = 1e-12 below the 1e-10 gate
  Vec mu1(1);
  mu1 << 0.05;
  CHECK_THROWS_AS(risk_premium(tiny, mu1, 0.0), SingularVolatility);

  Mat wide(2, 1);  // m > n
  wide << 0.2, 0.3;
  CHECK_THROWS_AS(risk_premium(wide, mu, 0.0), ShapeMismatch);
  CHECK_THROWS_AS(risk_premium(tiny, mu, 0.0), ShapeMismatch);  // mu size 2 vs m=1
}

static MarketModel simple_market() {
  MarketModel mk;
  mk.n = 1;
  mk.m = 1;
  mk.T = 1.0;
  mk.r = 0.0;
  mk.mu = VecCoefficient(Vec::Constant(1, 0.05));
  mk.sigma = MatCoefficient(Mat::Constant(1, 1, 0.2));
  mk.validate();
  return mk;
}

TEST_CASE("market model: constant theta cache and declared bounds") {
  MarketModel mk = simple_market();
  const Vec w = Vec::Zero(1);
  CHECK(mk.theta(0.3, w)[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(mk.deterministic());
  CHECK(mk.constant_coefficients());

  // State-dependent drift exceeding its declared bound trips the assertion.
  MarketModel wild = simple_market();
  wild.mu = VecCoefficient::of_state(
      [](double, const Vec& w) { return Vec::Constant(1, 0.05 + w[0]); });
  wild.mu_bound = 0.10;
  wild.validate();
  CHECK(wild.mu_at(0.5, Vec::Constant(1, 0.01))[0] == doctest::Approx(0.06));
  CHECK_THROWS_AS(wild.mu_at(0.5, Vec::Constant(1, 0.5)), BoundViolation);
  CHECK_FALSE(wild.deterministic());
}

TEST_CASE("uniform grid and grid validation") {
  auto g = uniform_grid(1.0, 4);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  CHECK_THROWS_AS(sample_brownian(1, {0.0, 0.5, 0.25}, 1, 2), BadGrid);
  CHECK_THROWS_AS(sample_brownian(1, {0.1, 0.5}, 1, 2), BadGrid);
  CHECK_THROWS_AS(sample_brownian(1, {0.0}, 1, 2), BadGrid);
  CHECK_NOTHROW(sample_brownian(1, {0.0, 0.3, 0.5}, 1, 0));  // empty batch is fine
}

TEST_CASE("brownian batch: moments, reproducibility, extension") {
  const int paths = 20000, steps = 16;
  auto b = sample_brownian(99, uniform_grid(1.0, steps), 2, paths);
  REQUIRE(b.steps() == steps);
  REQUIRE(b.path_count() == paths);

  const double dt = 1.0 / steps;
  for (int k : {0, 7, 15})
    for (int j = 0; j < 2; ++j) {
      const auto col = b.incr.col(k * 2 + j);
      const double mean = col.mean();
      const double var = (col.array() - mean).square().sum() / (paths - 1);
      CHECK(std::abs(mean) < 5.0 * std::sqrt(dt / paths));
      CHECK(std::abs(var - dt) < 5.0 * dt * std::sqrt(2.0 / (paths - 1)));
    }
  // Cross-component covariance ~ 0.
  for (int k : {0, 9}) {
    const double cov =
        (b.incr.col(k * 2).array() * b.incr.col(k * 2 + 1).array()).mean();
    CHECK(std::abs(cov) < 5.0 * dt / std::sqrt(double(paths)));
  }

  // Same seed -> identical batch; different seed -> different draws.
  auto b2 = sample_brownian(99, uniform_grid(1.0, steps), 2, paths);
  CHECK(b.incr == b2.incr);
  auto b3 = sample_brownian(100, uniform_grid(1.0, steps), 2, 10);
  CHECK(b3.incr(0, 0) != b.incr(0, 0));

  // Appending paths leaves existing ones untouched (counter-based draws).
  auto small = sample_brownian(99, uniform_grid(1.0, steps), 2, 50);
  CHECK(small.incr == b.incr.topRows(50));

  // Spot-check against direct generator addressing (order independence).
  for (auto [i, k, j] : {std::array<int, 3>{3, 11, 1}, {17, 0, 0}, {1234, 15, 1}})
    CHECK(b.incr_at(i, k, j) ==
          std::sqrt(dt) * philox_normal(99, i, k, j));
}

TEST_CASE("brownian states are increment prefix sums") {
  auto b = sample_brownian(5, uniform_grid(2.0, 8), 2, 7);
  const Mat& st = b.states();
  CHECK(st.leftCols(2).isZero(0.0));
  for (int i = 0; i < 7; ++i) {
    Vec acc = Vec::Zero(2);
    for (int k = 0; k < 8; ++k) {
      acc += b.incr_vec(i, k);
      CHECK((b.state_vec(i, k + 1) - acc).lpNorm<Eigen::Infinity>() == 0.0);
    }
  }
}

TEST_CASE("girsanov drift adjustment shifts increments by theta*dt") {
  auto b = sample_brownian(11, uniform_grid(1.0, 4), 1, 3);
  std::vector<Vec> theta(4, Vec::Constant(1, 0.25));
  auto q = girsanov_drift_adjust(b, theta);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(q.incr_at(i, k, 0) ==
            doctest::Approx(b.incr_at(i, k, 0) + 0.25 * b.dt(k)).epsilon(1e-15));
  CHECK_THROWS_AS(girsanov_drift_adjust(b, std::vector<Vec>(3, Vec::Zero(1))),
                  ShapeMismatch);
}
