#pragma once

#include <Eigen/Dense>
#include "json.hpp"
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "valleyfill/qp.hpp"

namespace valleyfill::solvers {

/// Step sizes, shrink factors and stopping rule for SPDS (and the PDS/RPDS
/// baselines, which reuse alpha, beta, d_lambda and the stopping rule).
struct SpdsConfig {
  double alpha = 2.8e-4;
  double beta = 1.8;
  double tau_u = 0.974;
  double tau_lambda = 0.974;
  double d_lambda = 5e5;
  int max_iters = 25;
  double tol = 1e-4;
  double rpds_dual_reg = 0.1;

  /// Rejects non-positive steps/radius and shrink factors outside (0,1).
  /// `allow_unit_shrink` admits tau == 1 (the classic PDS limit).
  void validate(bool allow_unit_shrink = false) const;
};

/// Step sizes quoted for the 700-EV study were tuned with powers in W and
/// squared voltages in V^2. This maps them onto kW and p.u.^2 for a feeder
/// whose line-to-neutral base voltage is `base_kv`, keeping every iterate
/// (up to units) identical.
SpdsConfig reference_spds_config(double base_kv);

/// A dual regularisation weight quoted for W and V^2, in kW and p.u.^2
/// (beta * reg is unit free, so it scales inversely to beta).
double dual_reg_from_si(double reg_si, double base_kv);

struct IterationState {
  Eigen::VectorXd u;
  Eigen::VectorXd lambda;
  int iter = 0;
  double eps = 0.0;
};

IterationState initial_state(const qp::ChargingProblem& problem);

struct IterationRecord {
  double objective = 0.0;
  double max_violation = 0.0;
  double eps = 0.0;
  double dual_norm = 0.0;
  double seconds = 0.0;
};

enum class Termination { Tolerance, MaxIterations, Converged, DegenerateStall };

std::string to_string(Termination reason);

struct KktResiduals {
  double stationarity = 0.0;        // ||u - Pi_U(u - grad_u L)||
  double primal_feasibility = 0.0;  // max(0, max_j d_j)
  double dual_feasibility = 0.0;    // max(0, -min_j lambda_j)
  double complementarity = 0.0;     // max_j |lambda_j d_j|

  double worst() const;
};

KktResiduals kkt_residuals(const qp::ChargingProblem& problem, const Eigen::VectorXd& u,
                           const Eigen::VectorXd& lambda);

struct SolveReport {
  std::string solver;
  std::vector<IterationRecord> history;
  std::vector<Eigen::VectorXd> aggregate_history;  // K-vector per iteration
  std::vector<Eigen::VectorXd> lambda_history;     // h*K per iteration
  Eigen::VectorXd u;
  Eigen::VectorXd lambda;
  Termination reason = Termination::MaxIterations;
  KktResiduals kkt;
  int lost_uplinks = 0;

  int iterations() const { return static_cast<int>(history.size()); }
  double final_objective() const { return history.empty() ? 0.0 : history.back().objective; }
};

nlohmann::json to_json(const SolveReport& report);

/// `iter,objective,max_violation,eps,dual_norm`
void write_iteration_csv(std::ostream& out, const SolveReport& report);

// --- SPDS -----------------------------------------------------------------

/// Two-tier primal update of EV i: shrink, gradient step, project, expand,
/// project again. Uses the gradient at (state.u, state.lambda).
Eigen::VectorXd spds_primal_step(const qp::ChargingProblem& problem, const IterationState& state,
                                 const SpdsConfig& config, int i);

/// Gradient block of EV i from the broadcast quantities:
/// p_bar * aggregate + rho * u_block - (D_d^T lambda) block, with the last
/// term summed node by node in a fixed order.
Eigen::VectorXd local_gradient(double p_bar, const Eigen::Ref<const Eigen::VectorXd>& aggregate,
                               const Eigen::Ref<const Eigen::VectorXd>& u_block, double rho,
                               const Eigen::Ref<const Eigen::VectorXd>& d_column,
                               const Eigen::Ref<const Eigen::VectorXd>& lambda);

/// Same update from an explicit gradient block; shared with the chargers in simnet.
Eigen::VectorXd spds_primal_update(const Eigen::Ref<const Eigen::VectorXd>& u_block,
                                   const Eigen::Ref<const Eigen::VectorXd>& grad_block, double e, double alpha,
                                   double tau);

/// Two-tier dual update over the nonnegative ball of radius d_lambda.
Eigen::VectorXd spds_dual_step(const qp::ChargingProblem& problem, const IterationState& state,
                               const SpdsConfig& config);

Eigen::VectorXd spds_dual_update(const Eigen::Ref<const Eigen::VectorXd>& lambda,
                                 const Eigen::Ref<const Eigen::VectorXd>& constraint, double beta, double tau,
                                 double radius);

enum class SpdsMode { Synchronous, ViaSimnet };

/// Called after every iteration with the new state.
using IterationObserver = std::function<void(const IterationState&)>;

struct RunOptions {
  IterationObserver observer;
  /// Test hook: accept tau_u == tau_lambda == 1 (classic PDS).
  bool allow_unit_shrink = false;
};

SolveReport run_spds(const qp::ChargingProblem& problem, const SpdsConfig& config,
                     SpdsMode mode = SpdsMode::Synchronous, const RunOptions& options = {});

/// Classic projected primal-dual subgradient (no shrinkage).
SolveReport run_pds(const qp::ChargingProblem& problem, const SpdsConfig& config, const RunOptions& options = {});

/// PDS on L(u, lambda) - (rpds_dual_reg / 2) ||lambda||^2.
SolveReport run_rpds(const qp::ChargingProblem& problem, const SpdsConfig& config, const RunOptions& options = {});

// --- Centralized reference -------------------------------------------------

struct CentralizedOptions {
  double tol = 1e-9;        // target on every KKT residual
  int max_outer = 200;      // multiplier updates
  int max_inner = 20000;    // accelerated gradient steps per subproblem
  double penalty = 0.0;     // augmented-Lagrangian weight; 0 picks one from the data
};

/// Augmented Lagrangian on the coupling constraints, each subproblem solved by
/// accelerated projected gradient over the product of local sets, followed by
/// an active-set polish. Throws NumericError if `tol` is not reached.
SolveReport run_centralized(const qp::ChargingProblem& problem, const CentralizedOptions& options = {});

// --- Convergence certificate ------------------------------------------------

struct CertificateReport {
  double c = 0.0;          // strong monotonicity of the shrunken operator
  double l_grad_g = 0.0;   // Lipschitz constant of the valley-filling gradient
  double l_d = 0.0;        // Lipschitz constant of d(u)
  double l_u = 0.0;
  double l_lambda = 0.0;
  double l_phi = 0.0;
  double alpha_hat = 0.0;  // alpha / tau_u^2
  double beta_hat = 0.0;   // beta / tau_lambda^2
  double tau_hat = 0.0;    // alpha_hat - beta_hat
  double delta = 0.0;
  double phi = 0.0;
  double varrho = 0.0;
  double condition_lhs = 0.0;
  double condition_rhs = 0.0;
  bool condition_holds = false;
};

CertificateReport certify(const qp::ChargingProblem& problem, const SpdsConfig& config);

nlohmann::json to_json(const CertificateReport& report);

/// d_lambda = (F(u_slater) - lower_bound) / gamma + sigma, gamma the smallest
/// slack of the Slater point. lower_bound = 0 is always valid (F >= 0).
double slater_dual_bound(const qp::ChargingProblem& problem, const Eigen::VectorXd& u_slater,
                         double lower_bound = 0.0, double sigma = 1.0);

}  // namespace valleyfill::solvers
