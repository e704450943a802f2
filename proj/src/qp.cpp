#include "valleyfill/qp.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "valleyfill/errors.hpp"
#include "valleyfill/proj.hpp"

namespace valleyfill::qp {

namespace {

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

}  // namespace

Eigen::VectorXd ChargingProblem::aggregate(const Eigen::VectorXd& u) const {
  ConstMatMap rates(u.data(), K, n);
  return p_b + rates * p_bar;
}

Eigen::VectorXd ChargingProblem::apply_dd(const Eigen::VectorXd& u) const {
  ConstMatMap rates(u.data(), K, n);
  Eigen::MatrixXd out = d_matrix * rates.transpose();  // h x K
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd ChargingProblem::apply_dd_transpose(const Eigen::VectorXd& lambda) const {
  ConstMatMap duals(lambda.data(), h, K);
  Eigen::MatrixXd out = duals.transpose() * d_matrix;  // K x n
  return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
}

Eigen::VectorXd ChargingProblem::flat_schedule() const {
  Eigen::VectorXd u(primal_size());
  for (int i = 0; i < n; ++i) u.segment(static_cast<Eigen::Index>(i) * K, K).setConstant(e(i) / K);
  return u;
}

void ChargingProblem::check_primal(const Eigen::VectorXd& u) const {
  if (u.size() != primal_size())
    throw DimensionError("primal vector has " + std::to_string(u.size()) + " entries, expected " +
                         std::to_string(primal_size()));
}

void ChargingProblem::check_dual(const Eigen::VectorXd& lambda) const {
  if (lambda.size() != dual_size())
    throw DimensionError("dual vector has " + std::to_string(lambda.size()) + " entries, expected " +
                         std::to_string(dual_size()));
}

ChargingProblem assemble_problem(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                 const AssemblyOptions& options) {
  if (!(options.nu_lower >= 0.0 && options.nu_lower < 1.0)) throw DomainError("nu_lower must lie in [0,1)");
  if (!(options.rho >= 0.0)) throw DomainError("rho must be nonnegative");
  scenario.horizon.validate();

  ChargingProblem problem;
  problem.n = static_cast<int>(scenario.evs.size());
  problem.h = feeder.node_count;
  problem.K = scenario.horizon.steps;
  problem.rho = options.rho;
  problem.nu_lower = options.nu_lower;
  problem.v0_squared = feeder.v0_squared;

  if (scenario.baseline.node_count() != problem.h || scenario.baseline.steps() != problem.K)
    throw DimensionError("baseline must be " + std::to_string(problem.h) + " x " + std::to_string(problem.K));

  problem.p_bar.resize(problem.n);
  problem.e.resize(problem.n);
  problem.d_matrix = Eigen::MatrixXd::Zero(problem.h, problem.n);
  for (int i = 0; i < problem.n; ++i) {
    const auto& ev = scenario.evs[i];
    if (ev.node < 1 || ev.node > problem.h)
      throw DimensionError("EV " + std::to_string(ev.id) + " sits on node " + std::to_string(ev.node) +
                           " which is not in the feeder");
    problem.p_bar(i) = ev.max_power_kw;
    problem.e(i) = fleet::local_slot_requirement(ev, scenario.horizon);
    problem.ev_node.push_back(ev.node);
    // Column i of R G Pbar is Pbar_i times the column of R for the EV's node.
    problem.d_matrix.col(i) = -2.0 * feeder.r_matrix.col(ev.node - 1) * (ev.max_power_kw / feeder.base_kva);
  }

  problem.p_b = scenario.baseline.aggregate_kw;
  const Eigen::MatrixXd drops = fleet::baseline_voltage_drops(feeder, scenario.baseline);  // h x K
  const double floor_sq = options.nu_lower * options.nu_lower * feeder.v0_squared;
  Eigen::MatrixXd y_b = (floor_sq - feeder.v0_squared) + drops.array();
  problem.y_b = Eigen::Map<Eigen::VectorXd>(y_b.data(), y_b.size());

  problem.baseline_violates_bound = (problem.y_b.array() > 0.0).any();
  problem.baseline_strictly_feasible = (problem.y_b.array() < 0.0).all();
  if (problem.baseline_violates_bound) {
    const std::string msg = "baseline load already pushes some voltage below the floor (max y_b = " +
                            std::to_string(problem.y_b.maxCoeff()) + ")";
    if (options.on_violation == BaselineViolationPolicy::Error) throw InfeasibleScenario(msg);
    spdlog::warn("{}", msg);
  }
  problem.slater_holds = find_slater_point(problem).has_value();
  return problem;
}

namespace {

Eigen::VectorXd project_schedule(const ChargingProblem& problem, const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  for (int i = 0; i < problem.n; ++i) {
    const auto off = static_cast<Eigen::Index>(i) * problem.K;
    out.segment(off, problem.K) = proj::project_box_hyperplane(v.segment(off, problem.K), problem.e(i));
  }
  return out;
}

bool strictly_feasible(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  return (constraint_values(problem, u).array() < 0.0).all();
}

}  // namespace

std::optional<Eigen::VectorXd> find_slater_point(const ChargingProblem& problem, int max_iters) {
  if (problem.dual_size() == 0) return problem.flat_schedule();
  Eigen::VectorXd u = problem.flat_schedule();
  if (strictly_feasible(problem, u)) return u;

  // Charge each EV in proportion to the baseline headroom at its node.
  Eigen::VectorXd shaped(problem.primal_size());
  for (int i = 0; i < problem.n; ++i) {
    Eigen::VectorXd w(problem.K);
    for (int t = 0; t < problem.K; ++t)
      w(t) = std::max(0.0, -problem.y_b(static_cast<Eigen::Index>(t) * problem.h + problem.ev_node[i] - 1));
    const double total = w.sum();
    if (total > 0.0) w *= problem.e(i) / total;
    else w.setConstant(problem.e(i) / problem.K);
    shaped.segment(static_cast<Eigen::Index>(i) * problem.K, problem.K) = w;
  }
  u = project_schedule(problem, shaped);
  if (strictly_feasible(problem, u)) return u;

  // Projected gradient on s/mu * log sum exp(mu d / s).
  const double s = std::max(problem.y_b.cwiseAbs().maxCoeff(), 1e-12);
  const double mu = 200.0;
  const double d_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(problem.d_matrix).singularValues()(0);
  if (!(d_norm > 0.0)) return std::nullopt;
  const double step = s / (mu * d_norm * d_norm);
  for (int k = 0; k < max_iters; ++k) {
    const Eigen::VectorXd d = constraint_values(problem, u);
    if ((d.array() < 0.0).all()) return u;
    Eigen::VectorXd weights = (mu / s * (d.array() - d.maxCoeff())).exp();
    weights /= weights.sum();
    u = project_schedule(problem, u + step * problem.apply_dd_transpose(weights));
  }
  if (strictly_feasible(problem, u)) return u;
  return std::nullopt;
}

double objective(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  problem.check_primal(u);
  return 0.5 * problem.aggregate(u).squaredNorm() + 0.5 * problem.rho * u.squaredNorm();
}

Eigen::VectorXd constraint_values(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  problem.check_primal(u);
  return problem.y_b - problem.apply_dd(u);
}

double max_violation(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  return std::max(0.0, constraint_values(problem, u).maxCoeff());
}

double lagrangian(const ChargingProblem& problem, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  problem.check_dual(lambda);
  return objective(problem, u) + lambda.dot(constraint_values(problem, u));
}

Eigen::VectorXd grad_u(const ChargingProblem& problem, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  problem.check_primal(u);
  problem.check_dual(lambda);
  const Eigen::VectorXd total = problem.aggregate(u);
  Eigen::MatrixXd blocks = total * problem.p_bar.transpose();  // K x n, block i = Pbar_i * total
  Eigen::VectorXd g = Eigen::Map<Eigen::VectorXd>(blocks.data(), blocks.size());
  g += problem.rho * u;
  g -= problem.apply_dd_transpose(lambda);
  return g;
}

Eigen::VectorXd grad_lambda(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  return constraint_values(problem, u);
}

namespace {

Eigen::MatrixXd ev_node_power_kw(const ChargingProblem& problem, const Eigen::VectorXd& u) {
  problem.check_primal(u);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(problem.h, problem.K);
  for (int i = 0; i < problem.n; ++i)
    p.row(problem.ev_node[i] - 1) +=
        problem.p_bar(i) * u.segment(static_cast<Eigen::Index>(i) * problem.K, problem.K).transpose();
  return p;
}

}  // namespace

Eigen::MatrixXd schedule_voltages(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                  const ChargingProblem& problem, const Eigen::VectorXd& u) {
  const Eigen::MatrixXd p = (scenario.baseline.node_p_kw + ev_node_power_kw(problem, u)) / feeder.base_kva;
  const Eigen::MatrixXd q = scenario.baseline.node_q_kvar / feeder.base_kva;
  Eigen::MatrixXd v(problem.h, problem.K);
  for (int t = 0; t < problem.K; ++t) v.col(t) = grid::lindistflow_voltages(feeder, {p.col(t), q.col(t)});
  return v;
}

Eigen::MatrixXd schedule_voltages_distflow(const grid::FeederModel& feeder, const fleet::FleetScenario& scenario,
                                           const ChargingProblem& problem, const Eigen::VectorXd& u) {
  const Eigen::MatrixXd p = (scenario.baseline.node_p_kw + ev_node_power_kw(problem, u)) / feeder.base_kva;
  const Eigen::MatrixXd q = scenario.baseline.node_q_kvar / feeder.base_kva;
  Eigen::MatrixXd v(problem.h, problem.K);
  for (int t = 0; t < problem.K; ++t) v.col(t) = grid::distflow_voltages(feeder, {p.col(t), q.col(t)});
  return v;
}

nlohmann::json to_json(const ChargingProblem& problem) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json d = nlohmann::json::array();
  for (int r = 0; r < problem.d_matrix.rows(); ++r) {
    Eigen::VectorXd row = problem.d_matrix.row(r).transpose();
    d.push_back(vec(row));
  }
  return {{"n", problem.n},
          {"h", problem.h},
          {"K", problem.K},
          {"rho", problem.rho},
          {"nu_lower", problem.nu_lower},
          {"v0_squared", problem.v0_squared},
          {"p_bar_kw", vec(problem.p_bar)},
          {"slot_requirement", vec(problem.e)},
          {"baseline_kw", vec(problem.p_b)},
          {"y_b", vec(problem.y_b)},
          {"d_matrix", d},
          {"ev_node", problem.ev_node},
          {"baseline_strictly_feasible", problem.baseline_strictly_feasible},
          {"slater_holds", problem.slater_holds}};
}

}  // namespace valleyfill::qp
