#pragma once

// Euclidean projections used by every solver.
//
// Box-hyperplane: {u in [0,1]^K : sum(u) = e}. The minimiser has the form
// clamp(v - s, 0, 1) for a scalar shift s; the clamped sum is continuous and
// nonincreasing in s, so bisection on [min(v) - 1, max(v)] brackets it. Once
// the free coordinates are known the shift is recomputed in closed form.
//
// Nonnegative ball: {y >= 0 : ||y|| <= r}. Clip then scale is exact: the
// clipped point is the projection onto the orthant, and radial scaling of a
// point in a cone keeps it in the cone, so the KKT conditions of the
// intersection are met by the scaled point.

#include <Eigen/Dense>

namespace valleyfill::proj {

struct BoxSimplexSet {
  int dimension = 0;
  double equality_sum = 0.0;

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& u, double tol = 1e-10) const;
};

struct DualBallSet {
  Eigen::Index dimension = 0;
  double radius = 0.0;

  bool contains(const Eigen::Ref<const Eigen::VectorXd>& y, double tol = 1e-10) const;
};

/// Throws DomainError if e is outside [0, K].
Eigen::VectorXd project_box_hyperplane(const Eigen::Ref<const Eigen::VectorXd>& v, double e);

Eigen::VectorXd project_nonneg_ball(const Eigen::Ref<const Eigen::VectorXd>& v, double radius);

}  // namespace valleyfill::proj
