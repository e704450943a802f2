#pragma once

// Centralized valley-filling QP.
//
// Layouts used throughout the solvers:
//   primal u   : n*K, EV-major, u[i*K + t] is EV i's rate at step t
//   dual/cons  : h*K, time-major, entry t*h + (node-1)
// Powers are kW in the objective; voltage constraints are in p.u.^2.

#include <Eigen/Dense>
#include "json.hpp"
#include <optional>
#include <vector>

#include "valleyfill/fleet.hpp"
#include "valleyfill/grid.hpp"

namespace valleyfill::qp {

enum class BaselineViolationPolicy { Error, Warn };

struct AssemblyOptions {
  double rho = 1e-3;
  double nu_lower = 0.954;
  BaselineViolationPolicy on_violation = BaselineViolationPolicy::Error;
};

struct ChargingProblem {
  int n = 0;
  int h = 0;
  int K = 0;
  Eigen::VectorXd p_bar;     // kW per EV
  Eigen::MatrixXd d_matrix;  // h x n, D = -2 R G Pbar (p.u.^2 per unit rate)
  Eigen::VectorXd y_b;       // h*K, nu^2 V0 - (V0 - baseline drop)
  Eigen::VectorXd e;         // n, slot requirements
  Eigen::VectorXd p_b;       // K, aggregate baseline kW
  double rho = 1e-3;
  double nu_lower = 0.954;
  double v0_squared = 1.0;
  std::vector<grid::NodeId> ev_node;

  // Assembly diagnostics.
  bool baseline_violates_bound = false;
  bool baseline_strictly_feasible = false;  // every y_b < 0
  bool slater_holds = false;                // a strictly feasible schedule was found

  Eigen::Index primal_size() const { return static_cast<Eigen::Index>(n) * K; }
  Eigen::Index dual_size() const { return static_cast<Eigen::Index>(h) * K; }

  /// P_b + P~ u, K entries.
  Eigen::VectorXd aggregate(const Eigen::VectorXd& u) const;
  /// D_d u, h*K entries.
  Eigen::VectorXd apply_dd(const Eigen::VectorXd& u) const;
  /// D_d^T lambda, n*K entries.
  Eigen::VectorXd apply_dd_transpose(const Eigen::VectorXd& lambda) const;
  /// Uniform schedule u_i(t) = e_i / K, always inside the local sets.
  Eigen::VectorXd flat_schedule() const;

  void check_primal(const Eigen::VectorXd& u) const;
  void check_dual(const Eigen::VectorXd& lambda) const;
};

/// Looks for a schedule in the local sets with every d_j < 0: the flat
/// schedule, then one shaped by baseline headroom, then a projected-gradient
/// descent on a soft maximum of d. Empty if none is found within `max_iters`.
std::optional<Eigen::VectorXd> find_slater_point(const ChargingProblem& problem, int max_iters = 500);

ChargingProblem assemble_problem(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                 const AssemblyOptions& options = {});

/// 1/2 ||P_b + P~u||^2 + rho/2 ||u||^2
double objective(const ChargingProblem& problem, const Eigen::VectorXd& u);

/// d(u) = y_b - D_d u; feasible iff every entry <= 0.
Eigen::VectorXd constraint_values(const ChargingProblem& problem, const Eigen::VectorXd& u);

double max_violation(const ChargingProblem& problem, const Eigen::VectorXd& u);

double lagrangian(const ChargingProblem& problem, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda);

/// P~^T (P_b + P~u) + rho u - D_d^T lambda
Eigen::VectorXd grad_u(const ChargingProblem& problem, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda);

/// d(u); independent of lambda.
Eigen::VectorXd grad_lambda(const ChargingProblem& problem, const Eigen::VectorXd& u);

/// Squared LinDistFlow voltages h x K for a schedule (baseline + EV load).
Eigen::MatrixXd schedule_voltages(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                  const ChargingProblem& problem, const Eigen::VectorXd& u);

/// Same, through the nonlinear DistFlow sweep.
Eigen::MatrixXd schedule_voltages_distflow(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                           const ChargingProblem& problem, const Eigen::VectorXd& u);

nlohmann::json to_json(const ChargingProblem& problem);

}  // namespace valleyfill::qp
