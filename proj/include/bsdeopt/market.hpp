#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "bsdeopt/errors.hpp"

namespace bsdeopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Market coefficient: a constant, a deterministic function of t, or a
/// function of (t, W_t).  W_t is the driving Brownian value, which is the
/// Markov state used throughout (solvers regress on it, simulators carry it).
template <class V>
class CoefficientT {
 public:
  CoefficientT() = default;
  CoefficientT(V constant) : kind_(Kind::Constant), value_(std::move(constant)) {}

  static CoefficientT of_time(std::function<V(double)> f) {
    CoefficientT c;
    c.kind_ = Kind::Time;
    c.ft_ = std::move(f);
    return c;
  }
  static CoefficientT of_state(std::function<V(double, const Vec&)> f) {
    CoefficientT c;
    c.kind_ = Kind::State;
    c.fs_ = std::move(f);
    return c;
  }

  bool is_constant() const { return kind_ == Kind::Constant; }
  /// True when the value never depends on the Brownian state.
  bool deterministic() const { return kind_ != Kind::State; }

  V operator()(double t, const Vec& w) const {
    switch (kind_) {
      case Kind::Constant: return value_;
      case Kind::Time: return ft_(t);
      default: return fs_(t, w);
    }
  }

 private:
  enum class Kind { Constant, Time, State };
  Kind kind_ = Kind::Constant;
  V value_{};
  std::function<V(double)> ft_;
  std::function<V(double, const Vec&)> fs_;
};

using ScalarCoefficient = CoefficientT<double>;
using VecCoefficient = CoefficientT<Vec>;
using MatCoefficient = CoefficientT<Mat>;

/// theta = sigma^T (sigma sigma^T)^{-1} (mu - r*1).
/// Throws SingularVolatility when the smallest eigenvalue of sigma*sigma^T is
/// below eig_min, and ShapeMismatch on inconsistent dimensions.
Vec risk_premium(const Mat& sigma, const Vec& mu, double r, double eig_min = 1e-10);

/// Frictionless market on [0, T]: m stocks driven by an n-dimensional
/// Brownian motion (m <= n), constant interest rate r >= 0, income stream and
/// a terminal endowment.  Declared sup-norm bounds are enforced by assertion
/// (BoundViolation) at every evaluation.
struct MarketModel {
  int n = 1;  ///< Brownian dimension
  int m = 1;  ///< number of stocks
  double T = 1.0;
  double r = 0.0;

  VecCoefficient mu;      ///< drift, R^m
  MatCoefficient sigma;   ///< volatility, m x n
  ScalarCoefficient income{0.0};  ///< e_t (absolute) or etilde_t (relative)
  bool income_is_relative = false;
  double endowment = 0.0;  ///< terminal lump E (exponential preferences only)

  // Declared sup-norm bounds; negative means "derive from the (t=0, W=0)
  // evaluation during validate()" which is exact for constant coefficients.
  double mu_bound = -1.0;
  double sigma_bound = -1.0;
  double theta_bound = -1.0;
  double income_bound = -1.0;
  double eig_min = 1e-10;

  /// Checks shapes/ranges, applies the eigenvalue gate at (0, 0), fills
  /// unset bounds and caches theta when mu and sigma are constant.
  void validate();

  Vec mu_at(double t, const Vec& w) const;
  Mat sigma_at(double t, const Vec& w) const;
  double income_at(double t, const Vec& w) const;
  Vec theta(double t, const Vec& w) const;

  bool deterministic() const {
    return mu.deterministic() && sigma.deterministic() && income.deterministic();
  }
  bool constant_coefficients() const {
    return mu.is_constant() && sigma.is_constant() && income.is_constant();
  }

 private:
  bool validated_ = false;
  bool theta_constant_ = false;
  Vec theta_cache_;
};

/// Brownian increments for path_count paths on a fixed time grid.  Draw
/// (path i, step k, component j) comes from the counter-based generator at
/// address (seed, i, k, j), so the batch is reproducible independent of
/// generation order and paths can be appended without disturbing earlier ones.
struct BrownianBatch {
  std::vector<double> grid;  ///< N+1 times, grid[0] = 0, strictly increasing
  int n = 1;
  std::uint64_t seed = 0;
  Mat incr;  ///< path_count x (N*n); column k*n + j holds dW^j over [t_k, t_{k+1}]

  int path_count() const { return static_cast<int>(incr.rows()); }
  int steps() const { return static_cast<int>(grid.size()) - 1; }
  double dt(int k) const { return grid[k + 1] - grid[k]; }
  double incr_at(int i, int k, int j) const { return incr(i, k * n + j); }
  Vec incr_vec(int i, int k) const { return incr.row(i).segment(k * n, n).transpose(); }

  /// Cumulative states W_{t_k}: path_count x ((N+1)*n), built lazily.
  const Mat& states() const;
  Vec state_vec(int i, int k) const { return states().row(i).segment(k * n, n).transpose(); }

 private:
  mutable std::shared_ptr<Mat> states_;
};

std::vector<double> uniform_grid(double T, int steps);

/// Validates the grid (BadGrid) and fills increments N(0, dt_k I).
BrownianBatch sample_brownian(std::uint64_t seed, std::vector<double> grid, int n,
                              int path_count);

/// Returns a batch whose increments are dW + theta_k dt, i.e. increments of
/// the Brownian motion under the measure change used by the relative-control
/// wealth dynamics.  theta_per_step has one R^n value per step (size N).
BrownianBatch girsanov_drift_adjust(const BrownianBatch& b,
                                    const std::vector<Vec>& theta_per_step);

}  // namespace bsdeopt
