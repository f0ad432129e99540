#include "bsdeopt/constraints.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace bsdeopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int geometry_dim(const Geometry& g) {
  return std::visit(
      [](const auto& s) -> int {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) return -1;  // any
        else if constexpr (std::is_same_v<S, Box>) return static_cast<int>(s.lower.size());
        else if constexpr (std::is_same_v<S, Ball>) return static_cast<int>(s.center.size());
        else if constexpr (std::is_same_v<S, HalfSpace>) return static_cast<int>(s.normal.size());
        else if constexpr (std::is_same_v<S, Polytope>)
          return s.vertices.empty() ? -1 : static_cast<int>(s.vertices[0].size());
        else if constexpr (std::is_same_v<S, FinitePointSet>)
          return s.points.empty() ? -1 : static_cast<int>(s.points[0].size());
        else {
          for (const auto& msub : s.members) {
            int d = geometry_dim(msub);
            if (d >= 0) return d;
          }
          return -1;
        }
      },
      g.shape);
}

void validate_geometry(const Geometry& g, int dim) {
  std::visit(
      [dim](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) {
          (void)s;
        } else if constexpr (std::is_same_v<S, Box>) {
          if (s.lower.size() != dim || s.upper.size() != dim)
            throw ShapeMismatch("box bounds do not match set dimension");
          for (int i = 0; i < dim; ++i)
            if (!(s.lower[i] <= s.upper[i]))
              throw EmptySet(fmt::format("box empty in coordinate {}", i));
        } else if constexpr (std::is_same_v<S, Ball>) {
          if (s.center.size() != dim) throw ShapeMismatch("ball center dimension");
          if (s.radius < 0) throw EmptySet("ball with negative radius");
        } else if constexpr (std::is_same_v<S, HalfSpace>) {
          if (s.normal.size() != dim) throw ShapeMismatch("half-space normal dimension");
          if (s.normal.norm() == 0.0) throw ShapeMismatch("half-space normal is zero");
        } else if constexpr (std::is_same_v<S, Polytope>) {
          if (s.vertices.empty()) throw EmptySet("polytope with no vertices");
          if (dim > 8)
            throw PreconditionViolated("polytope projection supports dimension <= 8");
          if (s.vertices.size() > 16)
            throw PreconditionViolated("polytope projection supports <= 16 vertices");
          for (const auto& v : s.vertices)
            if (v.size() != dim) throw ShapeMismatch("polytope vertex dimension");
        } else if constexpr (std::is_same_v<S, FinitePointSet>) {
          if (s.points.empty()) throw EmptySet("finite point set with no points");
          for (const auto& p : s.points)
            if (p.size() != dim) throw ShapeMismatch("point dimension");
        } else {  // UnionOfConvex
          if (s.members.empty()) throw EmptySet("union with no members");
          for (const auto& msub : s.members) {
            if (!geometry_convex(msub))
              throw PreconditionViolated("union members must be convex");
            validate_geometry(msub, dim);
          }
        }
      },
      g.shape);
}

Vec default_member(const Geometry& g, int dim) {
  return std::visit(
      [dim](const auto& s) -> Vec {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) {
          return Vec::Zero(dim);
        } else if constexpr (std::is_same_v<S, Box>) {
          Vec p(dim);
          for (int i = 0; i < dim; ++i)
            p[i] = std::min(std::max(0.0, s.lower[i]), s.upper[i]);
          return p;
        } else if constexpr (std::is_same_v<S, Ball>) {
          return s.center;
        } else if constexpr (std::is_same_v<S, HalfSpace>) {
          if (0.0 <= s.offset) return Vec::Zero(dim);
          return s.normal * (s.offset / s.normal.squaredNorm());
        } else if constexpr (std::is_same_v<S, Polytope>) {
          return s.vertices[0];
        } else if constexpr (std::is_same_v<S, FinitePointSet>) {
          return s.points[0];
        } else {
          return default_member(s.members[0], dim);
        }
      },
      g.shape);
}

ProjectionResult project_box(const Vec& q, const Box& b) {
  Vec p(q.size());
  for (int i = 0; i < q.size(); ++i) p[i] = std::min(std::max(q[i], b.lower[i]), b.upper[i]);
  return {p, (q - p).norm(), true};
}

ProjectionResult project_ball(const Vec& q, const Ball& b) {
  const Vec d = q - b.center;
  const double len = d.norm();
  if (len <= b.radius) return {q, 0.0, true};
  return {b.center + d * (b.radius / len), len - b.radius, true};
}

ProjectionResult project_halfspace(const Vec& q, const HalfSpace& h) {
  const double slack = h.normal.dot(q) - h.offset;
  if (slack <= 0.0) return {q, 0.0, true};
  const double n2 = h.normal.squaredNorm();
  Vec p = q - h.normal * (slack / n2);
  return {p, slack / std::sqrt(n2), true};
}

// Enumerates affinely independent vertex subsets of size <= dim+1, projects q
// onto each affine hull, keeps feasible (nonnegative barycentric) candidates.
// The nearest point of a convex hull lies in the convex hull of such a subset,
// so the minimum over candidates is the exact projection.
ProjectionResult project_polytope(const Vec& q, const Polytope& poly) {
  const int nv = static_cast<int>(poly.vertices.size());
  const int d = static_cast<int>(q.size());
  const int max_k = std::min(nv, d + 1);

  Vec best;
  double best_dist = kInf;
  std::vector<int> idx;

  for (std::uint32_t mask = 1; mask < (1u << nv); ++mask) {
    const int k = std::popcount(mask);
    if (k > max_k) continue;
    idx.clear();
    for (int i = 0; i < nv; ++i)
      if (mask & (1u << i)) idx.push_back(i);

    Vec cand;
    if (k == 1) {
      cand = poly.vertices[idx[0]];
    } else {
      const Vec& v0 = poly.vertices[idx[0]];
      Mat D(d, k - 1);
      for (int j = 1; j < k; ++j) D.col(j - 1) = poly.vertices[idx[j]] - v0;
      Eigen::ColPivHouseholderQR<Mat> qr(D);
      if (qr.rank() < k - 1) continue;  // affinely dependent; smaller subsets cover it
      const Vec mu = qr.solve(q - v0);
      double sum = 0.0;
      bool feasible = true;
      for (int j = 0; j < k - 1; ++j) {
        if (mu[j] < -1e-12) { feasible = false; break; }
        sum += mu[j];
      }
      if (!feasible || 1.0 - sum < -1e-12) continue;
      cand = v0 + D * mu;
    }
    const double dist = (q - cand).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = std::move(cand);
    }
  }
  return {best, best_dist, true};
}

ProjectionResult project_points(const Vec& q, const FinitePointSet& s) {
  int best = 0;
  double best_dist = (q - s.points[0]).norm();
  for (std::size_t i = 1; i < s.points.size(); ++i) {
    const double dist = (q - s.points[i]).norm();
    if (dist < best_dist) {  // strict: ties keep the lowest index
      best_dist = dist;
      best = static_cast<int>(i);
    }
  }
  return {s.points[best], best_dist, s.points.size() == 1};
}

}  // namespace

bool geometry_convex(const Geometry& g) {
  return std::visit(
      [](const auto& s) -> bool {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FinitePointSet>) return s.points.size() == 1;
        else if constexpr (std::is_same_v<S, UnionOfConvex>)
          // Multi-member unions are reported nonconvex (conservative).
          return s.members.size() == 1 && geometry_convex(s.members[0]);
        else { (void)s; return true; }
      },
      g.shape);
}

ProjectionResult project(const Vec& q, const Geometry& g) {
  return std::visit(
      [&q](const auto& s) -> ProjectionResult {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) {
          return {q, 0.0, true};
        } else if constexpr (std::is_same_v<S, Box>) {
          return project_box(q, s);
        } else if constexpr (std::is_same_v<S, Ball>) {
          return project_ball(q, s);
        } else if constexpr (std::is_same_v<S, HalfSpace>) {
          return project_halfspace(q, s);
        } else if constexpr (std::is_same_v<S, Polytope>) {
          return project_polytope(q, s);
        } else if constexpr (std::is_same_v<S, FinitePointSet>) {
          return project_points(q, s);
        } else {
          ProjectionResult best;
          best.distance = kInf;
          for (const auto& msub : s.members) {  // strict <: lowest member index wins ties
            ProjectionResult r = project(q, msub);
            if (r.distance < best.distance) best = std::move(r);
          }
          best.unique = false;
          return best;
        }
      },
      g.shape);
}

double set_distance(const Vec& q, const Geometry& g) {
  if (std::holds_alternative<FullSpace>(g.shape)) return 0.0;  // hot path
  return project(q, g).distance;
}

bool contains(const Vec& q, const Geometry& g, double tol) {
  return project(q, g).distance <= tol;
}

Geometry scale(const Geometry& g, double lambda) {
  if (lambda == 0.0) throw OutOfRange("scale: lambda must be nonzero");
  return std::visit(
      [lambda](const auto& s) -> Geometry {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) {
          return Geometry{FullSpace{}};
        } else if constexpr (std::is_same_v<S, Box>) {
          if (lambda > 0) return Geometry{Box{lambda * s.lower, lambda * s.upper}};
          return Geometry{Box{lambda * s.upper, lambda * s.lower}};
        } else if constexpr (std::is_same_v<S, Ball>) {
          return Geometry{Ball{lambda * s.center, std::abs(lambda) * s.radius}};
        } else if constexpr (std::is_same_v<S, HalfSpace>) {
          if (lambda > 0) return Geometry{HalfSpace{s.normal, lambda * s.offset}};
          return Geometry{HalfSpace{-s.normal, -lambda * s.offset}};
        } else if constexpr (std::is_same_v<S, Polytope>) {
          Polytope p;
          p.vertices.reserve(s.vertices.size());
          for (const auto& v : s.vertices) p.vertices.push_back(lambda * v);
          return Geometry{std::move(p)};
        } else if constexpr (std::is_same_v<S, FinitePointSet>) {
          FinitePointSet p;
          p.points.reserve(s.points.size());
          for (const auto& v : s.points) p.points.push_back(lambda * v);
          return Geometry{std::move(p)};
        } else {
          UnionOfConvex u;
          u.members.reserve(s.members.size());
          for (const auto& msub : s.members) u.members.push_back(scale(msub, lambda));
          return Geometry{std::move(u)};
        }
      },
      g.shape);
}

ConstraintSet::ConstraintSet(int dim, Geometry g) : dim_(dim), base_(std::move(g)) {
  if (dim < 1) throw ShapeMismatch("constraint set dimension must be >= 1");
  validate_geometry(base_, dim_);
  pbar_ = default_member(base_, dim_);
}

void ConstraintSet::add_schedule_entry(double t, Geometry g) {
  validate_geometry(g, dim_);
  if (!schedule_.empty() && !(t > schedule_.back().first))
    throw BadGrid("constraint schedule times must be strictly increasing");
  schedule_.emplace_back(t, std::move(g));
}

const Geometry& ConstraintSet::at(double t) const {
  const Geometry* g = &base_;
  for (const auto& [time, geom] : schedule_) {
    if (time <= t) g = &geom;
    else break;
  }
  return *g;
}

bool ConstraintSet::is_convex() const {
  if (!geometry_convex(base_)) return false;
  for (const auto& [time, geom] : schedule_)
    if (!geometry_convex(geom)) return false;
  return true;
}

void ConstraintSet::set_bounded_member(Vec p) {
  if (p.size() != dim_) throw ShapeMismatch("bounded member dimension");
  if (!contains(p, base_, 1e-9))
    throw PreconditionViolated("designated bounded member is not in the set");
  pbar_ = std::move(p);
}

ProjectionResult project(const Vec& q, const ConstraintSet& set, double t) {
  if (q.size() != set.dim()) throw ShapeMismatch("project: point dimension != set dimension");
  return project(q, set.at(t));
}

ConstraintSet scale(const ConstraintSet& set, double lambda) {
  ConstraintSet out(set.dim(), scale(set.base_, lambda));
  for (const auto& [time, geom] : set.schedule_)
    out.schedule_.emplace_back(time, scale(geom, lambda));
  out.pbar_ = lambda * set.pbar_;
  return out;
}

namespace {

struct Interval {
  double lo, hi;
};

// Convex one-dimensional geometries reduce to intervals.
std::optional<Interval> interval_of(const Geometry& g) {
  return std::visit(
      [](const auto& s) -> std::optional<Interval> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, FullSpace>) {
          return Interval{-kInf, kInf};
        } else if constexpr (std::is_same_v<S, Box>) {
          return Interval{s.lower[0], s.upper[0]};
        } else if constexpr (std::is_same_v<S, Ball>) {
          return Interval{s.center[0] - s.radius, s.center[0] + s.radius};
        } else if constexpr (std::is_same_v<S, HalfSpace>) {
          const double a = s.normal[0];
          if (a > 0) return Interval{-kInf, s.offset / a};
          return Interval{s.offset / a, kInf};
        } else if constexpr (std::is_same_v<S, Polytope>) {
          double lo = kInf, hi = -kInf;
          for (const auto& v : s.vertices) {
            lo = std::min(lo, v[0]);
            hi = std::max(hi, v[0]);
          }
          return Interval{lo, hi};
        } else {
          return std::nullopt;
        }
      },
      g.shape);
}

std::optional<ConsumptionMax> argmax_log_geom(const Geometry& g, double w) {
  if (auto iv = interval_of(g)) {
    if (!(iv->hi > 0)) return std::nullopt;
    const double c = std::min(std::max(w, iv->lo), iv->hi);
    return ConsumptionMax{c, w * std::log(c) - c};
  }
  if (const auto* fp = std::get_if<FinitePointSet>(&g.shape)) {
    std::optional<ConsumptionMax> best;
    for (const auto& p : fp->points) {
      const double c = p[0];
      if (!(c > 0)) continue;
      const double v = w * std::log(c) - c;
      if (!best || v > best->value) best = ConsumptionMax{c, v};
    }
    return best;
  }
  const auto& u = std::get<UnionOfConvex>(g.shape);
  std::optional<ConsumptionMax> best;
  for (const auto& msub : u.members) {
    auto r = argmax_log_geom(msub, w);
    if (r && (!best || r->value > best->value)) best = r;
  }
  return best;
}

double power_objective(double c, double alpha, double gamma, double ey) {
  if (c == 0.0) return 0.0;  // 0^gamma/gamma = 0 convention (gamma > 0 path)
  return (alpha / gamma) * std::pow(c, gamma) * ey - c;
}

std::optional<ConsumptionMax> argmax_power_geom(const Geometry& g, double alpha,
                                                double gamma, double y) {
  const double ey = std::exp(y);
  const double cu = std::pow(alpha * ey, 1.0 / (1.0 - gamma));  // unconstrained argmax
  if (auto iv = interval_of(g)) {
    double lo = iv->lo, hi = iv->hi;
    if (gamma > 0) {
      if (hi < 0) return std::nullopt;
      lo = std::max(lo, 0.0);
    } else {
      if (!(hi > 0)) return std::nullopt;
    }
    const double c = std::min(std::max(cu, lo), hi);
    return ConsumptionMax{c, power_objective(c, alpha, gamma, ey)};
  }
  if (const auto* fp = std::get_if<FinitePointSet>(&g.shape)) {
    std::optional<ConsumptionMax> best;
    for (const auto& p : fp->points) {
      const double c = p[0];
      if (gamma > 0 ? c < 0 : !(c > 0)) continue;
      const double v = power_objective(c, alpha, gamma, ey);
      if (!best || v > best->value) best = ConsumptionMax{c, v};
    }
    return best;
  }
  const auto& u = std::get<UnionOfConvex>(g.shape);
  std::optional<ConsumptionMax> best;
  for (const auto& msub : u.members) {
    auto r = argmax_power_geom(msub, alpha, gamma, y);
    if (r && (!best || r->value > best->value)) best = r;
  }
  return best;
}

}  // namespace

ConsumptionMax argmax_consumption_log(const ConstraintSet& C, double weight, double t) {
  if (C.dim() != 1)
    throw PreconditionViolated("consumption sets must be one-dimensional");
  if (!(weight > 0)) throw OutOfRange("argmax_consumption_log: weight must be positive");
  auto r = argmax_log_geom(C.at(t), weight);
  if (!r) throw NoFeasiblePositivePoint("consumption set has no positive member");
  return *r;
}

ConsumptionMax argmax_consumption_power(const ConstraintSet& C, double alpha,
                                        double gamma, double y, double t) {
  if (C.dim() != 1)
    throw PreconditionViolated("consumption sets must be one-dimensional");
  if (!(alpha > 0)) throw OutOfRange("argmax_consumption_power: alpha must be positive");
  if (!(gamma < 1.0) || gamma == 0.0)
    throw OutOfRange("argmax_consumption_power: gamma must lie in (-inf,0) or (0,1)");
  auto r = argmax_power_geom(C.at(t), alpha, gamma, y);
  if (!r)
    throw NoFeasiblePoint(gamma > 0 ? "consumption set has no member >= 0"
                                    : "consumption set has no positive member");
  return *r;
}

}  // namespace bsdeopt
