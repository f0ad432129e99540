#include "bsdeopt/bsde.hpp"

#include <fmt/format.h>

#include <cmath>

#include "bsdeopt/csv.hpp"
#include "bsdeopt/errors.hpp"

namespace bsdeopt {

namespace {

void check_grid(const Vec& grid) {
  if (grid.size() < 2) throw BadGrid("grid needs at least two points");
  if (grid[0] != 0.0) throw BadGrid("grid must start at t = 0");
  for (int k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw BadGrid("grid must be strictly increasing");
}

// One Cash-Karp 4(5) step from (t, y) with step h (sign gives direction).
struct Ck45Result {
  double y4, y5;
};

template <class F>
Ck45Result ck45_step(F&& g, double t, double y, double h) {
  const double k1 = g(t, y);
  const double k2 = g(t + h / 5, y + h * (k1 / 5));
  const double k3 = g(t + 3 * h / 10, y + h * (3 * k1 / 40 + 9 * k2 / 40));
  const double k4 =
      g(t + 3 * h / 5, y + h * (3 * k1 / 10 - 9 * k2 / 10 + 6 * k3 / 5));
  const double k5 = g(t + h, y + h * (-11 * k1 / 54 + 5 * k2 / 2 -
                                      70 * k3 / 27 + 35 * k4 / 27));
  const double k6 =
      g(t + 7 * h / 8,
        y + h * (1631 * k1 / 55296 + 175 * k2 / 512 + 575 * k3 / 13824 +
                 44275 * k4 / 110592 + 253 * k5 / 4096));
  Ck45Result out;
  out.y5 = y + h * (37 * k1 / 378 + 250 * k3 / 621 + 125 * k4 / 594 +
                    512 * k6 / 1771);
  out.y4 = y + h * (2825 * k1 / 27648 + 18575 * k3 / 48384 +
                    13525 * k4 / 55296 + 277 * k5 / 14336 + k6 / 4);
  return out;
}

// y is known at t_from; returns y at t_to.  The embedded error controls
// recursive halving; the 4th-order member is propagated so that fixed-grid
// refinement studies see a clean 4th-order signature.
template <class F>
double integrate_interval(F&& g, double t_from, double t_to, double y,
                          double tol_per_unit, double min_step, long& budget) {
  const double h = t_to - t_from;
  if (--budget < 0)
    throw StiffnessFailure(fmt::format(
        "step budget exhausted near t = {} (driver too stiff)", t_from));
  const Ck45Result r = ck45_step(g, t_from, y, h);
  const double err = std::abs(r.y5 - r.y4);
  if (std::isfinite(r.y4) && err <= tol_per_unit * std::abs(h) * (1 + std::abs(r.y4)))
    return r.y4;
  if (std::abs(h) <= min_step)
    throw StiffnessFailure(
        fmt::format("step control underflow near t = {} (solution may blow up)",
                    t_from));
  const double mid = t_from + h / 2;
  const double ym = integrate_interval(g, t_from, mid, y, tol_per_unit, min_step, budget);
  return integrate_interval(g, mid, t_to, ym, tol_per_unit, min_step, budget);
}

// Tensor polynomial features with per-dimension degree <= degree, states
// standardized by the anchor scale (sqrt of time).
void eval_basis(const Vec& w, double scale, int degree, Vec& out) {
  const int n = static_cast<int>(w.size());
  const int per = degree + 1;
  out.setOnes();
  int stride = 1;
  for (int j = 0; j < n; ++j) {
    const double u = w[j] / scale;
    // multiply in powers of u along dimension j
    for (int idx = static_cast<int>(out.size()) - 1; idx >= 0; --idx) {
      const int a = (idx / stride) % per;
      double p = 1;
      for (int q = 0; q < a; ++q) p *= u;
      out[idx] *= p;
    }
    stride *= per;
  }
}

double implicit_y(const Driver& driver, double t, const Vec& w, double ehat,
                  const Vec& z_trunc, double dt, double tol, int max_iter) {
  double y = ehat;
  for (int it = 0; it < max_iter; ++it) {
    const double next = ehat + driver.f(t, w, y, z_trunc) * dt;
    if (!std::isfinite(next) || std::abs(next) > 1e100)
      throw FixedPointDivergence(
          fmt::format("implicit step diverged at t = {}", t));
    if (std::abs(next - y) <= tol * (1 + std::abs(next))) return next;
    y = next;
  }
  throw FixedPointDivergence(
      fmt::format("implicit step did not converge at t = {}", t));
}

void truncate_z(Vec& z, double cap) {
  const double nz = z.norm();
  if (nz > cap) z *= cap / nz;
}

void fill_y_bound(BsdeSolution& s, double terminal_abs, double max_abs_y) {
  const Driver& d = *s.driver;
  const double T = s.grid[s.grid.size() - 1];
  double k0 = 0;
  const Vec w = Vec::Zero(d.dim()), z = Vec::Zero(d.dim());
  for (int k = 0; k < s.grid.size(); ++k)
    k0 = std::max(k0, std::abs(d.f(s.grid[k], w, 0.0, z)));
  const double ky = d.sampled_y_slope(T);
  s.y_bound = (terminal_abs + k0 * T) * std::exp(ky * T);
  s.y_bound_flag = max_abs_y > s.y_bound * (1 + 1e-9);
}

}  // namespace

int lsmc_basis_dim(int state_dim, int degree) {
  int b = 1;
  for (int j = 0; j < state_dim; ++j) b *= degree + 1;
  return b;
}

double BsdeSolution::y_at(int k, const Vec& w) const {
  if (k < 0 || k > steps()) throw OutOfRange("y_at: step index out of range");
  if (mode == Mode::Deterministic) return y_det[k];
  if (k == steps()) {
    if (std::isnan(terminal_const))
      throw OutOfRange("y_at: terminal condition was per-path, not constant");
    return terminal_const;
  }
  const int b = static_cast<int>(e_coeffs[k].size());
  Vec phi(b);
  if (b == 1)
    phi[0] = 1.0;
  else
    eval_basis(w, std::sqrt(std::max(grid[k], grid[1])), basis_degree, phi);
  const double ehat = phi.dot(e_coeffs[k]);
  Vec z = z_coeffs[k].transpose() * phi;
  truncate_z(z, z_cap);
  return implicit_y(*driver, grid[k], w, ehat, z, grid[k + 1] - grid[k], fp_tol,
                    fp_max_iter);
}

Vec BsdeSolution::z_at(int k, const Vec& w) const {
  if (k < 0 || k >= steps()) throw OutOfRange("z_at: step index out of range");
  if (mode == Mode::Deterministic) return Vec::Zero(driver ? driver->dim() : 0);
  const int b = static_cast<int>(e_coeffs[k].size());
  Vec phi(b);
  if (b == 1)
    phi[0] = 1.0;
  else
    eval_basis(w, std::sqrt(std::max(grid[k], grid[1])), basis_degree, phi);
  return z_coeffs[k].transpose() * phi;
}

BsdeSolution solve_deterministic(std::shared_ptr<const Driver> driver,
                                 double terminal, const Vec& grid,
                                 double ode_tol) {
  if (!driver) throw PreconditionViolated("null driver");
  if (!driver->deterministic())
    throw PreconditionViolated(
        "solve_deterministic requires deterministic driver inputs");
  if (!(ode_tol > 0)) throw OutOfRange("ode_tol must be positive");
  check_grid(grid);

  const int N = static_cast<int>(grid.size()) - 1;
  const double T = grid[N];
  const Vec w = Vec::Zero(driver->dim());
  const Vec z = Vec::Zero(driver->dim());
  const auto g = [&](double t, double y) { return -driver->f(t, w, y, z); };

  BsdeSolution s;
  s.mode = BsdeSolution::Mode::Deterministic;
  s.grid = grid;
  s.driver = driver;
  s.terminal_const = terminal;
  s.y_det.resize(N + 1);
  s.y_det[N] = terminal;
  const double tol_per_unit = ode_tol / T;
  const double min_step = 1e-12 * std::max(1.0, T);
  long budget = 2'000'000;
  for (int k = N - 1; k >= 0; --k)
    s.y_det[k] = integrate_interval(g, grid[k + 1], grid[k], s.y_det[k + 1],
                                    tol_per_unit, min_step, budget);
  s.y0 = s.y_det[0];
  fill_y_bound(s, std::abs(terminal), s.y_det.cwiseAbs().maxCoeff());
  return s;
}

BsdeSolution solve_lsmc(std::shared_ptr<const Driver> driver, const Vec& terminal,
                        const BrownianBatch& batch, const LsmcSpec& spec) {
  if (!driver) throw PreconditionViolated("null driver");
  const int n = batch.n;
  if (driver->dim() != n) throw ShapeMismatch("driver dimension != batch dimension");
  const int N = batch.steps();
  const int paths = batch.path_count();
  if (terminal.size() != paths) throw ShapeMismatch("terminal size != path count");
  if (spec.degree < 1) throw OutOfRange("basis degree must be >= 1");
  const int B = lsmc_basis_dim(n, spec.degree);
  if (paths < 10 * B)
    throw PreconditionViolated(
        fmt::format("need at least {} paths for a basis of dimension {}", 10 * B, B));

  BsdeSolution s;
  s.mode = BsdeSolution::Mode::Regression;
  s.grid = Eigen::Map<const Vec>(batch.grid.data(), batch.grid.size());
  check_grid(s.grid);
  s.driver = driver;
  s.state_dim = n;
  s.basis_degree = spec.degree;
  s.z_cap = spec.z_cap;
  s.fp_tol = spec.fp_tol;
  s.fp_max_iter = spec.fp_max_iter;
  s.e_coeffs.resize(N);
  s.z_coeffs.resize(N);
  s.r2 = Vec::Zero(N);

  const Mat& states = batch.states();
  Vec ynext = terminal;
  Vec ycur(paths);
  Vec w(n), z(n), phi_row(B);
  Mat phi, rhs, coeffs, zraw;
  double max_abs_y = ynext.cwiseAbs().maxCoeff();

  for (int k = N - 1; k >= 0; --k) {
    const double t = s.grid[k];
    const double dt = s.grid[k + 1] - s.grid[k];
    const int b = (k == 0) ? 1 : B;  // all paths share the zero state at t = 0
    const double scale = std::sqrt(std::max(t, s.grid[1]));

    phi.resize(paths, b);
    if (b == 1) {
      phi.setOnes();
    } else {
      for (int i = 0; i < paths; ++i) {
        w = states.row(i).segment(k * n, n).transpose();
        eval_basis(w, scale, spec.degree, phi_row);
        phi.row(i) = phi_row;
      }
    }

    rhs.resize(paths, 1 + n);
    rhs.col(0) = ynext;
    for (int j = 0; j < n; ++j)
      rhs.col(1 + j) = ynext.cwiseProduct(batch.incr.col(k * n + j));

    Eigen::ColPivHouseholderQR<Mat> qr(phi);
    if (qr.rank() < b)
      throw RegressionSingular(
          fmt::format("rank-deficient basis at step {} (rank {} < {})", k,
                      qr.rank(), b));
    coeffs = qr.solve(rhs);

    s.e_coeffs[k] = coeffs.col(0);
    s.z_coeffs[k] = -coeffs.rightCols(n) / dt;

    const Vec ehat = phi * s.e_coeffs[k];
    zraw = phi * s.z_coeffs[k];

    // R^2 of the conditional-expectation fit.
    const double sst = (ynext.array() - ynext.mean()).square().sum();
    const double ssr = (ynext - ehat).squaredNorm();
    s.r2[k] = sst > 0 ? 1.0 - ssr / sst : 1.0;

    if (k == 0) {
      // Identical state on every path: one implicit solve.
      z = zraw.row(0).transpose();
      truncate_z(z, spec.z_cap);
      w.setZero();
      s.y0 = implicit_y(*driver, t, w, ehat[0], z, dt, spec.fp_tol, spec.fp_max_iter);
      ycur.setConstant(s.y0);
    } else {
      for (int i = 0; i < paths; ++i) {
        w = states.row(i).segment(k * n, n).transpose();
        z = zraw.row(i).transpose();
        truncate_z(z, spec.z_cap);
        ycur[i] = implicit_y(*driver, t, w, ehat[i], z, dt, spec.fp_tol,
                             spec.fp_max_iter);
      }
    }
    max_abs_y = std::max(max_abs_y, ycur.cwiseAbs().maxCoeff());
    ynext = ycur;
  }

  fill_y_bound(s, terminal.cwiseAbs().maxCoeff(), max_abs_y);
  return s;
}

BsdeSolution solve_lsmc(std::shared_ptr<const Driver> driver, double terminal,
                        const BrownianBatch& batch, const LsmcSpec& spec) {
  BsdeSolution s = solve_lsmc(
      driver, Vec(Vec::Constant(batch.path_count(), terminal)), batch, spec);
  s.terminal_const = terminal;
  return s;
}

BmoDiagnostic bmo_estimate(const BsdeSolution& solution, const BrownianBatch& batch) {
  if (solution.mode != BsdeSolution::Mode::Regression)
    throw PreconditionViolated("bmo_estimate requires a regression solution");
  const int N = solution.steps();
  const int n = solution.state_dim;
  const int paths = batch.path_count();
  if (batch.steps() != N || batch.n != n)
    throw ShapeMismatch("batch does not match the solution grid");

  const Mat& states = batch.states();
  Vec tail = Vec::Zero(paths);  // int_{t_k}^T |Z|^2 dt per path, built backward
  BmoDiagnostic diag;
  diag.per_time = Vec::Zero(N);
  Vec w(n), phi_big(lsmc_basis_dim(n, solution.basis_degree));

  for (int k = N - 1; k >= 0; --k) {
    const double dt = solution.grid[k + 1] - solution.grid[k];
    const int b = static_cast<int>(solution.e_coeffs[k].size());
    Mat phi(paths, b);
    if (b == 1) {
      phi.setOnes();
    } else {
      for (int i = 0; i < paths; ++i) {
        w = states.row(i).segment(k * n, n).transpose();
        eval_basis(w, std::sqrt(std::max(solution.grid[k], solution.grid[1])),
                   solution.basis_degree, phi_big);
        phi.row(i) = phi_big.head(b);
      }
    }
    tail += (phi * solution.z_coeffs[k]).rowwise().squaredNorm() * dt;

    Eigen::ColPivHouseholderQR<Mat> qr(phi);
    const Vec fitted = phi * qr.solve(tail);
    // Max over bulk states only: polynomial fits extrapolate poorly at extreme
    // Brownian values, and those tails carry noise rather than signal.
    const double clip = 2.5 * std::sqrt(std::max(solution.grid[k], 1e-300));
    double best = 0.0;
    bool any = false;
    for (int i = 0; i < paths; ++i) {
      w = states.row(i).segment(k * n, n).transpose();
      if (w.lpNorm<Eigen::Infinity>() <= clip) {
        best = std::max(best, fitted[i]);
        any = true;
      }
    }
    diag.per_time[k] = any ? best : std::max(0.0, fitted.maxCoeff());
  }
  diag.estimate = diag.per_time.maxCoeff();
  return diag;
}

void export_solution_csv(const BsdeSolution& s, const std::string& path) {
  CsvWriter csv(path);
  if (s.mode == BsdeSolution::Mode::Deterministic) {
    std::vector<std::string> header = {"t", "y"};
    const int n = s.driver ? s.driver->dim() : 0;
    for (int j = 0; j < n; ++j) header.push_back(fmt::format("z{}", j));
    csv.row(header);
    for (int k = 0; k < s.grid.size(); ++k) {
      std::vector<double> cells = {s.grid[k], s.y_det[k]};
      for (int j = 0; j < n; ++j) cells.push_back(0.0);
      csv.numeric_row(cells);
    }
    return;
  }
  const int B = lsmc_basis_dim(s.state_dim, s.basis_degree);
  std::vector<std::string> header = {"t"};
  for (int i = 0; i < B; ++i) header.push_back(fmt::format("e_c{}", i));
  for (int j = 0; j < s.state_dim; ++j)
    for (int i = 0; i < B; ++i) header.push_back(fmt::format("z{}_c{}", j, i));
  header.push_back("r2");
  csv.row(header);
  for (int k = 0; k < s.steps(); ++k) {
    std::vector<double> cells = {s.grid[k]};
    const int b = static_cast<int>(s.e_coeffs[k].size());
    for (int i = 0; i < B; ++i) cells.push_back(i < b ? s.e_coeffs[k][i] : 0.0);
    for (int j = 0; j < s.state_dim; ++j)
      for (int i = 0; i < B; ++i)
        cells.push_back(i < b ? s.z_coeffs[k](i, j) : 0.0);
    cells.push_back(s.r2[k]);
    csv.numeric_row(cells);
  }
}

}  // namespace bsdeopt
