#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "bsdeopt/market.hpp"

namespace bsdeopt {

// Pointwise constraint-set families.  Investment sets live in R^n (the
// p = pi*sigma parameterization); consumption sets are one-dimensional.

struct FullSpace {};
struct Box {
  Vec lower, upper;  // entries may be +-infinity
};
struct Ball {
  Vec center;
  double radius = 0.0;
};
struct HalfSpace {
  Vec normal;          // must be nonzero
  double offset = 0.0;  // {x : normal . x <= offset}
};
struct Polytope {
  std::vector<Vec> vertices;  // convex hull; dimension <= 8, <= 16 vertices
};
struct FinitePointSet {
  std::vector<Vec> points;
};
struct Geometry;
struct UnionOfConvex {
  std::vector<Geometry> members;  // each member must itself be convex
};

struct Geometry {
  std::variant<FullSpace, Box, Ball, HalfSpace, Polytope, FinitePointSet, UnionOfConvex>
      shape;
};

/// Absolute tolerance used when asserting set membership of computed points.
inline constexpr double kMembershipTol = 1e-12;

/// A constraint set of fixed dimension, optionally time-dependent through a
/// piecewise-constant schedule of geometries: at(t) returns the entry with the
/// largest time <= t (the base geometry before the first entry).
class ConstraintSet {
 public:
  ConstraintSet() = default;
  ConstraintSet(int dim, Geometry g);

  void add_schedule_entry(double t, Geometry g);

  int dim() const { return dim_; }
  const Geometry& at(double t) const;
  const Geometry& base() const { return base_; }
  const std::vector<std::pair<double, Geometry>>& schedule() const {
    return schedule_;
  }
  bool time_dependent() const { return !schedule_.empty(); }
  bool is_convex() const;

  /// Designated bounded member p-bar (defaults to a cheap member of the base
  /// geometry); used by growth/Lipschitz bounds and their tests.
  const Vec& bounded_member() const { return pbar_; }
  void set_bounded_member(Vec p);

  friend ConstraintSet scale(const ConstraintSet& set, double lambda);

 private:
  int dim_ = 0;
  Geometry base_{FullSpace{}};
  std::vector<std::pair<double, Geometry>> schedule_;  // ascending times
  Vec pbar_;
};

struct ProjectionResult {
  Vec nearest;
  double distance = 0.0;
  bool unique = false;  ///< true when the set is convex
};

/// Metric projection.  Nonconvex families break ties toward the lowest
/// point/member index.
ProjectionResult project(const Vec& q, const Geometry& g);
ProjectionResult project(const Vec& q, const ConstraintSet& set, double t = 0.0);
double set_distance(const Vec& q, const Geometry& g);

/// Membership within absolute tolerance tol.
bool contains(const Vec& q, const Geometry& g, double tol = kMembershipTol);

/// Pointwise image {lambda * p}.  lambda must be nonzero.
Geometry scale(const Geometry& g, double lambda);
ConstraintSet scale(const ConstraintSet& set, double lambda);

bool geometry_convex(const Geometry& g);

struct ConsumptionMax {
  double c = 0.0;      ///< maximizer
  double value = 0.0;  ///< attained objective value
};

/// max over c in C_t of  weight*log(c) - c,  weight > 0.  Members <= 0 carry
/// value -infinity; a set with no positive member raises
/// NoFeasiblePositivePoint.  C must be one-dimensional.
ConsumptionMax argmax_consumption_log(const ConstraintSet& C, double weight,
                                      double t = 0.0);

/// max over c in C_t of  (alpha/gamma) c^gamma e^y - c  with the 0^gamma
/// convention for gamma > 0; gamma < 0 requires a positive member
/// (NoFeasiblePoint otherwise).
ConsumptionMax argmax_consumption_power(const ConstraintSet& C, double alpha,
                                        double gamma, double y, double t = 0.0);

}  // namespace bsdeopt
