#pragma once

#include <stdexcept>
#include <string>

namespace bsdeopt {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// -- market ------------------------------------------------------------------
struct SingularVolatility : Error { using Error::Error; };  // sigma*sigma^T below eigenvalue gate
struct BadGrid            : Error { using Error::Error; };  // non-monotone / empty time grid
struct ShapeMismatch      : Error { using Error::Error; };  // coefficient dimensions inconsistent
struct BoundViolation     : Error { using Error::Error; };  // declared sup-norm bound exceeded at evaluation

// -- constraints -------------------------------------------------------------
struct EmptySet                : Error { using Error::Error; };
struct NoFeasiblePoint         : Error { using Error::Error; };
struct NoFeasiblePositivePoint : NoFeasiblePoint { using NoFeasiblePoint::NoFeasiblePoint; };

// -- parameters --------------------------------------------------------------
struct OutOfRange   : Error { using Error::Error; };  // parameter outside admissible range
struct NegativeBeta : Error { using Error::Error; };  // log-utility discounting requires beta >= 0

// -- solvers -----------------------------------------------------------------
struct StiffnessFailure     : Error { using Error::Error; };  // ODE step control underflowed
struct RegressionSingular   : Error { using Error::Error; };  // regression basis rank-deficient
struct FixedPointDivergence : Error { using Error::Error; };  // implicit update failed to converge
struct PreconditionViolated : Error { using Error::Error; };

// -- configuration -----------------------------------------------------------
struct ConfigError : Error { using Error::Error; };

}  // namespace bsdeopt
