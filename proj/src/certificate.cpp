#include <algorithm>
#include <cmath>

#include "valleyfill/errors.hpp"
#include "valleyfill/solvers.hpp"

namespace valleyfill::solvers {

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

CertificateReport certify(const qp::ChargingProblem& problem, const SpdsConfig& config) {
  CertificateReport r;
  const double nK = static_cast<double>(problem.n) * problem.K;
  const double hK = static_cast<double>(problem.h) * problem.K;
  const double alpha = config.alpha, beta = config.beta;
  const double tu = config.tau_u, tl = config.tau_lambda;

  const double p_max = problem.p_bar.size() ? problem.p_bar.cwiseAbs().maxCoeff() : 0.0;
  r.l_grad_g = nK * p_max * p_max;
  // Row j of D_d restricted to one time step is row (node) of D.
  r.l_d = problem.d_matrix.size() ? hK * problem.d_matrix.rowwise().norm().maxCoeff() : 0.0;

  const double primal_mono = problem.rho + (1.0 - tu) / alpha;
  const double dual_mono = (1.0 - tl) / beta;
  r.c = std::min(primal_mono, dual_mono);
  r.l_u = primal_mono + r.l_grad_g + r.l_d;
  r.l_lambda = dual_mono + r.l_d;
  r.l_phi = std::hypot(r.l_u, r.l_lambda);

  r.alpha_hat = alpha / (tu * tu);
  r.beta_hat = beta / (tl * tl);
  r.tau_hat = r.alpha_hat - r.beta_hat;
  // The two cases of the bound coincide only in the limit; at a tie take the
  // larger (more conservative) of the two candidate products.
  if (r.tau_hat > 0.0)
    r.delta = alpha;
  else if (r.tau_hat < 0.0)
    r.delta = beta;
  else
    r.delta = std::max(alpha, beta);

  const int s = sign(r.tau_hat);
  r.phi = std::max(r.l_d * r.l_d, 1.0 - (1 - s) * dual_mono - (1 + s) * primal_mono);

  const double hat_max = std::max(r.alpha_hat, r.beta_hat);
  const double hat_min = std::min(r.alpha_hat, r.beta_hat);
  const double shrink_term = std::max(1.0 / (tu * tu), 1.0 / (tl * tl));
  const double lipschitz_term = r.delta * hat_max * r.l_phi * r.l_phi;

  r.varrho = shrink_term + lipschitz_term - 2.0 * r.c * hat_min + std::abs(r.tau_hat) * r.phi;
  r.condition_lhs = shrink_term + lipschitz_term - 1.0;
  r.condition_rhs = 2.0 * r.c * hat_max;
  r.condition_holds = r.condition_lhs < r.condition_rhs;
  return r;
}

nlohmann::json to_json(const CertificateReport& r) {
  return {{"c", r.c},
          {"l_grad_g", r.l_grad_g},
          {"l_d", r.l_d},
          {"l_u", r.l_u},
          {"l_lambda", r.l_lambda},
          {"l_phi", r.l_phi},
          {"alpha_hat", r.alpha_hat},
          {"beta_hat", r.beta_hat},
          {"tau_hat", r.tau_hat},
          {"delta", r.delta},
          {"phi", r.phi},
          {"varrho", r.varrho},
          {"condition_lhs", r.condition_lhs},
          {"condition_rhs", r.condition_rhs},
          {"condition_holds", r.condition_holds}};
}

double slater_dual_bound(const qp::ChargingProblem& problem, const Eigen::VectorXd& u_slater, double lower_bound,
                         double sigma) {
  problem.check_primal(u_slater);
  if (!(sigma > 0.0)) throw DomainError("sigma must be positive");
  const Eigen::VectorXd d = qp::constraint_values(problem, u_slater);
  const double gamma = d.size() ? -d.maxCoeff() : 0.0;
  if (!(gamma > 0.0)) throw InfeasibleScenario("supplied point is not strictly feasible");
  const double value = qp::objective(problem, u_slater);
  if (value < lower_bound) throw DomainError("lower bound exceeds objective at the Slater point");
  return (value - lower_bound) / gamma + sigma;
}

}  // namespace valleyfill::solvers
