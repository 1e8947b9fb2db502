#pragma once

#include <cmath>
#include <cstdlib>
#include <algorithm>

namespace slskit {

/// Shared numeric tolerances so solvers, validators and tests agree on what counts as zero.
struct NumericPolicy {
  /// Absolute floor below which a residual is treated as zero.
  double abs_tol = 1e-9;
  /// Relative tolerance against the scale of the data.
  double rel_tol = 1e-7;
  /// Equality-constraint feasibility: residual must stay below feas_tol * (1 + |rhs|).
  double feas_tol = 1e-8;
  /// Fixed-point residual required of the Riccati baseline.
  double riccati_tol = 1e-10;
};

inline const NumericPolicy& default_policy() {
  static const NumericPolicy p{};
  return p;
}

/// True when |value| is negligible at the given scale.
inline bool near_zero(double value, double scale = 1.0,
                      const NumericPolicy& p = default_policy()) {
  return std::abs(value) <= std::max(p.abs_tol, p.rel_tol * std::abs(scale));
}

/// True when a constraint residual is acceptable for a right hand side of the given norm.
inline bool feasible_residual(double residual, double rhs_norm,
                              const NumericPolicy& p = default_policy()) {
  return residual <= p.feas_tol * (1.0 + rhs_norm);
}

}  // namespace slskit
