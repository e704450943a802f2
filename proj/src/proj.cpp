#include "valleyfill/proj.hpp"

#include <cmath>
#include <string>

#include "valleyfill/errors.hpp"

namespace valleyfill::proj {

namespace {

constexpr double kFeasibleSumTol = 1e-10;

double clamped_sum(const Eigen::Ref<const Eigen::VectorXd>& v, double shift) {
  return (v.array() - shift).max(0.0).min(1.0).sum();
}

}  // namespace

bool BoxSimplexSet::contains(const Eigen::Ref<const Eigen::VectorXd>& u, double tol) const {
  return u.size() == dimension && u.minCoeff() >= -tol && u.maxCoeff() <= 1.0 + tol &&
         std::abs(u.sum() - equality_sum) <= tol * std::max(1.0, static_cast<double>(dimension));
}

bool DualBallSet::contains(const Eigen::Ref<const Eigen::VectorXd>& y, double tol) const {
  return y.size() == dimension && (y.size() == 0 || y.minCoeff() >= -tol) && y.norm() <= radius * (1.0 + tol);
}

Eigen::VectorXd project_box_hyperplane(const Eigen::Ref<const Eigen::VectorXd>& v, double e) {
  const auto K = v.size();
  if (!(e >= 0.0 && e <= static_cast<double>(K)))
    throw DomainError("equality sum " + std::to_string(e) + " outside [0, " + std::to_string(K) + "]");
  if (!v.allFinite()) throw DomainError("cannot project a non-finite vector");
  if (e == 0.0) return Eigen::VectorXd::Zero(K);
  if (e == static_cast<double>(K)) return Eigen::VectorXd::Ones(K);
  if (v.minCoeff() >= 0.0 && v.maxCoeff() <= 1.0 && std::abs(v.sum() - e) <= kFeasibleSumTol) return v;

  // At lo every coordinate clamps to 1 (sum K >= e); at hi every one to 0.
  double lo = v.minCoeff() - 1.0;
  double hi = v.maxCoeff();
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (clamped_sum(v, mid) > e)
      lo = mid;
    else
      hi = mid;
  }
  double shift = 0.5 * (lo + hi);

  // Closed-form shift over the coordinates left strictly inside the box.
  double free_sum = 0.0, upper_count = 0.0;
  int free_count = 0;
  for (Eigen::Index t = 0; t < K; ++t) {
    const double moved = v(t) - shift;
    if (moved >= 1.0)
      upper_count += 1.0;
    else if (moved > 0.0) {
      free_sum += v(t);
      ++free_count;
    }
  }
  if (free_count > 0) {
    const double exact = (free_sum - (e - upper_count)) / free_count;
    // Only accept it if it keeps the same active set.
    bool consistent = true;
    for (Eigen::Index t = 0; t < K && consistent; ++t) {
      const double before = v(t) - shift, after = v(t) - exact;
      if ((before >= 1.0) != (after >= 1.0) || (before <= 0.0) != (after <= 0.0)) consistent = false;
    }
    if (consistent) shift = exact;
  }
  return (v.array() - shift).max(0.0).min(1.0).matrix();
}

Eigen::VectorXd project_nonneg_ball(const Eigen::Ref<const Eigen::VectorXd>& v, double radius) {
  if (!(radius > 0.0)) throw DomainError("ball radius must be positive");
  Eigen::VectorXd y = v.cwiseMax(0.0);
  const double norm = y.norm();
  if (norm <= radius * (1.0 + 1e-15)) return y;
  return y * (radius / norm);
}

}  // namespace valleyfill::proj
