#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "valleyfill/errors.hpp"
#include "valleyfill/proj.hpp"
#include "valleyfill/solvers.hpp"

namespace valleyfill::solvers {

namespace {

Eigen::VectorXd project_all(const qp::ChargingProblem& problem, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < problem.n; ++i) {
    const auto off = static_cast<Eigen::Index>(i) * problem.K;
    out.segment(off, problem.K) = proj::project_box_hyperplane(v.segment(off, problem.K), problem.e(i));
  }
  return out;
}

// Largest singular value of D_d equals that of D (block structure over time).
double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

struct AugmentedLagrangian {
  const qp::ChargingProblem& problem;
  Eigen::VectorXd mu;
  double penalty;

  Eigen::VectorXd shifted_multiplier(const Eigen::VectorXd& u) const {
    return (mu + penalty * qp::constraint_values(problem, u)).cwiseMax(0.0);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const { return qp::grad_u(problem, u, shifted_multiplier(u)); }
};

// Accelerated projected gradient with adaptive restart. Returns steps used.
int minimize_subproblem(const AugmentedLagrangian& al, Eigen::VectorXd& u, double lipschitz, double tol,
                        int max_steps) {
  Eigen::VectorXd x = u, y = u;
  double t = 1.0;
  for (int k = 1; k <= max_steps; ++k) {
    const Eigen::VectorXd x_next = project_all(al.problem, y - al.gradient(y) / lipschitz);
    const double step = (x_next - y).norm();
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x_next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_next + ((t - 1.0) / t_next) * (x_next - x);
      t = t_next;
    }
    x = x_next;
    if (step <= tol) {
      u = x;
      return k;
    }
  }
  u = x;
  return max_steps;
}

// Equality-constrained QP on a guessed active set, refined by adding or
// releasing one constraint at a time.
bool polish(const qp::ChargingProblem& problem, Eigen::VectorXd& u, Eigen::VectorXd& lambda) {
  const int n = problem.n, K = problem.K, h = problem.h;
  const Eigen::Index N = problem.primal_size();
  constexpr double kBoxTol = 1e-7;
  constexpr Eigen::Index kMaxFree = 4000;

  std::vector<signed char> fixed(N, 0);  // 0 free, -1 at lower, +1 at upper
  for (Eigen::Index k = 0; k < N; ++k) {
    if (u(k) <= kBoxTol) fixed[k] = -1;
    else if (u(k) >= 1.0 - kBoxTol) fixed[k] = 1;
  }
  const Eigen::VectorXd d0 = qp::constraint_values(problem, u);
  std::vector<bool> active(problem.dual_size());
  for (Eigen::Index j = 0; j < problem.dual_size(); ++j) active[j] = lambda(j) > 0.0 || d0(j) > -1e-10;

  for (int pass = 0; pass < 50; ++pass) {
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index k = 0; k < N; ++k)
      if (!fixed[k]) free_idx.push_back(k);
    if (static_cast<Eigen::Index>(free_idx.size()) > kMaxFree) return false;
    std::vector<int> ev_rows(n, -1);
    int rows = 0;
    for (Eigen::Index k : free_idx)
      if (ev_rows[k / K] < 0) ev_rows[k / K] = rows++;
    std::vector<Eigen::Index> cons_rows;
    for (Eigen::Index j = 0; j < problem.dual_size(); ++j)
      if (active[j]) cons_rows.push_back(j);

    Eigen::VectorXd u_fixed = Eigen::VectorXd::Zero(N);
    for (Eigen::Index k = 0; k < N; ++k)
      if (fixed[k] > 0) u_fixed(k) = 1.0;
    const Eigen::VectorXd g_fixed = qp::grad_u(problem, u_fixed, Eigen::VectorXd::Zero(problem.dual_size()));
    const Eigen::VectorXd dd_fixed = problem.apply_dd(u_fixed);

    const Eigen::Index nf = free_idx.size();
    const Eigen::Index m = rows + static_cast<Eigen::Index>(cons_rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + m, nf + m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf + m);
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index ka = free_idx[a];
      for (Eigen::Index b = 0; b < nf; ++b) {
        const Eigen::Index kb = free_idx[b];
        if (ka % K == kb % K) kkt(a, b) = problem.p_bar(ka / K) * problem.p_bar(kb / K);
      }
      kkt(a, a) += problem.rho;
      rhs(a) = -g_fixed(ka);
      const int row = nf + ev_rows[ka / K];
      kkt(row, a) = kkt(a, row) = 1.0;
    }
    for (int i = 0; i < n; ++i) {
      if (ev_rows[i] < 0) continue;
      rhs(nf + ev_rows[i]) = problem.e(i) - u_fixed.segment(static_cast<Eigen::Index>(i) * K, K).sum();
    }
    for (std::size_t c = 0; c < cons_rows.size(); ++c) {
      const Eigen::Index j = cons_rows[c];
      const Eigen::Index row = nf + rows + static_cast<Eigen::Index>(c);
      const int t = static_cast<int>(j / h), node = static_cast<int>(j % h);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index ka = free_idx[a];
        if (ka % K == t) kkt(row, a) = kkt(a, row) = problem.d_matrix(node, ka / K);
      }
      rhs(row) = problem.y_b(j) - dd_fixed(j);
    }
    const Eigen::VectorXd z = kkt.completeOrthogonalDecomposition().solve(rhs);
    if (!z.allFinite()) return false;

    Eigen::VectorXd u_new = u_fixed;
    for (Eigen::Index a = 0; a < nf; ++a) u_new(free_idx[a]) = z(a);
    Eigen::VectorXd lambda_new = Eigen::VectorXd::Zero(problem.dual_size());
    for (std::size_t c = 0; c < cons_rows.size(); ++c) lambda_new(cons_rows[c]) = -z(nf + rows + c);

    // Primal: a free coordinate left the box, or an inactive constraint is violated.
    Eigen::Index worst_box = -1;
    double worst_box_excess = 1e-12;
    for (Eigen::Index a = 0; a < nf; ++a) {
      const double excess = std::max(-z(a), z(a) - 1.0);
      if (excess > worst_box_excess) worst_box_excess = excess, worst_box = free_idx[a];
    }
    if (worst_box >= 0) {
      fixed[worst_box] = u_new(worst_box) < 0.5 ? -1 : 1;
      continue;
    }
    const Eigen::VectorXd d = qp::constraint_values(problem, u_new);
    Eigen::Index worst_cons = -1;
    double worst_cons_excess = 1e-13;
    for (Eigen::Index j = 0; j < d.size(); ++j)
      if (!active[j] && d(j) > worst_cons_excess) worst_cons_excess = d(j), worst_cons = j;
    if (worst_cons >= 0) {
      active[worst_cons] = true;
      continue;
    }
    // Dual: a negative voltage multiplier or a box multiplier of the wrong sign.
    Eigen::Index worst_dual = -1;
    double worst_dual_value = -1e-12;
    for (std::size_t c = 0; c < cons_rows.size(); ++c)
      if (lambda_new(cons_rows[c]) < worst_dual_value) worst_dual_value = lambda_new(cons_rows[c]), worst_dual = c;
    const Eigen::VectorXd grad = qp::grad_u(problem, u_new, lambda_new);
    Eigen::Index worst_fixed = -1;
    double worst_fixed_value = 1e-12;
    for (Eigen::Index k = 0; k < N; ++k) {
      if (!fixed[k] || ev_rows[k / K] < 0) continue;
      const double reduced = grad(k) + z(nf + ev_rows[k / K]);
      const double wrong = fixed[k] < 0 ? -reduced : reduced;
      if (wrong > worst_fixed_value) worst_fixed_value = wrong, worst_fixed = k;
    }
    if (worst_dual >= 0 && (worst_fixed < 0 || -worst_dual_value >= worst_fixed_value)) {
      active[cons_rows[worst_dual]] = false;
      continue;
    }
    if (worst_fixed >= 0) {
      fixed[worst_fixed] = 0;
      continue;
    }
    u = u_new;
    lambda = lambda_new;
    return true;
  }
  return false;
}

}  // namespace

SolveReport run_centralized(const qp::ChargingProblem& problem, const CentralizedOptions& options) {
  if (!(options.tol > 0.0)) throw DomainError("centralized tolerance must be positive");
  if (options.max_outer < 1 || options.max_inner < 1) throw DomainError("iteration budgets must be positive");

  const double d_norm = spectral_norm(problem.d_matrix);
  const double smooth = problem.rho + problem.p_bar.squaredNorm();
  double penalty = options.penalty;
  if (penalty <= 0.0) penalty = d_norm > 0.0 ? smooth / (d_norm * d_norm) : 1.0;
  const double lipschitz = smooth + penalty * d_norm * d_norm;

  AugmentedLagrangian al{problem, Eigen::VectorXd::Zero(problem.dual_size()), penalty};
  Eigen::VectorXd u = problem.flat_schedule();
  SolveReport report;
  report.solver = "centralized";
  KktResiduals kkt;
  int outer = 0;
  // Inexact subproblem solves, tightened geometrically towards the target.
  const double final_inner_tol = options.tol / (10.0 * std::max(1.0, lipschitz));
  double inner_tol = std::max(final_inner_tol, 1e-3);
  for (outer = 1; outer <= options.max_outer; ++outer) {
    const int steps = minimize_subproblem(al, u, lipschitz, inner_tol, options.max_inner);
    inner_tol = std::max(final_inner_tol, 0.1 * inner_tol);
    al.mu = al.shifted_multiplier(u);
    kkt = kkt_residuals(problem, u, al.mu);

    IterationRecord rec;
    rec.objective = qp::objective(problem, u);
    rec.max_violation = qp::max_violation(problem, u);
    rec.dual_norm = al.mu.norm();
    rec.eps = kkt.worst();
    report.history.push_back(rec);
    spdlog::debug("centralized outer {:3d} inner {:6d} obj {:.12e} kkt {:.3e}", outer, steps, rec.objective,
                  rec.eps);
    if (kkt.worst() <= options.tol) break;
  }

  Eigen::VectorXd u_polished = u, lambda_polished = al.mu;
  if (polish(problem, u_polished, lambda_polished)) {
    const KktResiduals refined = kkt_residuals(problem, u_polished, lambda_polished);
    if (refined.worst() < kkt.worst()) {
      u = u_polished;
      al.mu = lambda_polished;
      kkt = refined;
    }
  }
  if (!(kkt.worst() <= options.tol))
    throw NumericError("centralized solver stopped with KKT residual " + std::to_string(kkt.worst()), outer,
                       kkt.worst());

  IterationRecord rec;
  rec.objective = qp::objective(problem, u);
  rec.max_violation = qp::max_violation(problem, u);
  rec.dual_norm = al.mu.norm();
  rec.eps = kkt.worst();
  report.history.back() = rec;
  report.aggregate_history.push_back(problem.aggregate(u));
  report.lambda_history.push_back(al.mu);
  report.u = u;
  report.lambda = al.mu;
  report.kkt = kkt;
  report.reason = Termination::Converged;
  return report;
}

}  // namespace valleyfill::solvers
