#include "valleyfill/solvers.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "valleyfill/errors.hpp"
#include "valleyfill/proj.hpp"
#include "valleyfill/simnet.hpp"

namespace valleyfill::solvers {

void SpdsConfig::validate(bool allow_unit_shrink) const {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("step sizes alpha and beta must be positive");
  auto shrink_ok = [&](double tau) { return tau > 0.0 && (tau < 1.0 || (allow_unit_shrink && tau == 1.0)); };
  if (!shrink_ok(tau_u) || !shrink_ok(tau_lambda)) throw DomainError("shrink factors must lie in (0,1)");
  if (!(d_lambda > 0.0) || !std::isfinite(d_lambda)) throw DomainError("dual radius must be positive and finite");
  if (max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (!(tol >= 0.0)) throw DomainError("tolerance must be nonnegative");
  if (!(rpds_dual_reg >= 0.0)) throw DomainError("RPDS regularisation must be nonnegative");
}

SpdsConfig reference_spds_config(double base_kv) {
  if (!(base_kv > 0.0)) throw DomainError("base voltage must be positive");
  // W^2 -> kW^2 divides the objective by 1e6; V^2 -> p.u.^2 divides the
  // constraint by Vb^2. Matching iterates needs lambda' = 1e-6 Vb^2 lambda.
  const double vb_sq = std::pow(base_kv * 1e3, 2);
  SpdsConfig config;
  config.alpha = 2.8e-10 * 1e6;
  config.beta = 1.8 * 1e-6 * vb_sq * vb_sq;
  config.d_lambda = 5e5 * 1e-6 * vb_sq;
  config.tau_u = config.tau_lambda = 0.974;
  config.max_iters = 25;
  config.tol = 1e-4;
  config.rpds_dual_reg = dual_reg_from_si(0.1, base_kv);
  return config;
}

double dual_reg_from_si(double reg_si, double base_kv) {
  if (!(base_kv > 0.0)) throw DomainError("base voltage must be positive");
  const double vb_sq = std::pow(base_kv * 1e3, 2);
  return reg_si * 1e6 / (vb_sq * vb_sq);
}

IterationState initial_state(const qp::ChargingProblem& problem) {
  return {Eigen::VectorXd::Zero(problem.primal_size()), Eigen::VectorXd::Zero(problem.dual_size()), 0, 0.0};
}

std::string to_string(Termination reason) {
  switch (reason) {
    case Termination::Tolerance: return "tolerance";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::Converged: return "converged";
    case Termination::DegenerateStall: return "degenerate_stall";
  }
  return "unknown";
}

double KktResiduals::worst() const {
  return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
}

KktResiduals kkt_residuals(const qp::ChargingProblem& problem, const Eigen::VectorXd& u, const Eigen::VectorXd& lambda) {
  KktResiduals r;
  const Eigen::VectorXd g = qp::grad_u(problem, u, lambda);
  const Eigen::VectorXd d = qp::constraint_values(problem, u);
  double stat = 0.0;
  for (int i = 0; i < problem.n; ++i) {
    const auto K = problem.K;
    const auto off = static_cast<Eigen::Index>(i) * K;
    Eigen::VectorXd step = u.segment(off, K) - g.segment(off, K);
    stat += (u.segment(off, K) - proj::project_box_hyperplane(step, problem.e(i))).squaredNorm();
  }
  r.stationarity = std::sqrt(stat);
  r.primal_feasibility = d.size() ? std::max(0.0, d.maxCoeff()) : 0.0;
  r.dual_feasibility = lambda.size() ? std::max(0.0, -lambda.minCoeff()) : 0.0;
  r.complementarity = lambda.size() ? lambda.cwiseProduct(d).cwiseAbs().maxCoeff() : 0.0;
  return r;
}

nlohmann::json to_json(const SolveReport& report) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json history = nlohmann::json::array();
  for (std::size_t k = 0; k < report.history.size(); ++k) {
    const auto& rec = report.history[k];
    history.push_back({{"iter", k + 1},
                       {"objective", rec.objective},
                       {"max_violation", rec.max_violation},
                       {"eps", rec.eps},
                       {"dual_norm", rec.dual_norm},
                       {"seconds", rec.seconds}});
  }
  return {{"solver", report.solver},
          {"iterations", report.iterations()},
          {"termination", to_string(report.reason)},
          {"final_objective", report.final_objective()},
          {"lost_uplinks", report.lost_uplinks},
          {"kkt",
           {{"stationarity", report.kkt.stationarity},
            {"primal_feasibility", report.kkt.primal_feasibility},
            {"dual_feasibility", report.kkt.dual_feasibility},
            {"complementarity", report.kkt.complementarity}}},
          {"history", history},
          {"u", vec(report.u)},
          {"lambda", vec(report.lambda)}};
}

void write_iteration_csv(std::ostream& out, const SolveReport& report) {
  out << "iter,objective,max_violation,eps,dual_norm\n" << std::setprecision(17);
  for (std::size_t k = 0; k < report.history.size(); ++k) {
    const auto& rec = report.history[k];
    out << k + 1 << ',' << rec.objective << ',' << rec.max_violation << ',' << rec.eps << ',' << rec.dual_norm << '\n';
  }
}

Eigen::VectorXd local_gradient(double p_bar, const Eigen::Ref<const Eigen::VectorXd>& aggregate,
                               const Eigen::Ref<const Eigen::VectorXd>& u_block, double rho,
                               const Eigen::Ref<const Eigen::VectorXd>& d_column,
                               const Eigen::Ref<const Eigen::VectorXd>& lambda) {
  const Eigen::Index K = aggregate.size(), h = d_column.size();
  if (u_block.size() != K || lambda.size() != h * K) throw DimensionError("gradient inputs have inconsistent sizes");
  Eigen::VectorXd g(K);
  for (Eigen::Index t = 0; t < K; ++t) {
    double coupling = 0.0;
    for (Eigen::Index j = 0; j < h; ++j) coupling += lambda(t * h + j) * d_column(j);
    g(t) = p_bar * aggregate(t) + rho * u_block(t) - coupling;
  }
  return g;
}

Eigen::VectorXd spds_primal_update(const Eigen::Ref<const Eigen::VectorXd>& u_block,
                                   const Eigen::Ref<const Eigen::VectorXd>& grad_block, double e, double alpha,
                                   double tau) {
  const Eigen::VectorXd inner = proj::project_box_hyperplane(tau * u_block - alpha * grad_block, e);
  return proj::project_box_hyperplane(inner / tau, e);
}

Eigen::VectorXd spds_dual_update(const Eigen::Ref<const Eigen::VectorXd>& lambda,
                                 const Eigen::Ref<const Eigen::VectorXd>& constraint, double beta, double tau,
                                 double radius) {
  const Eigen::VectorXd inner = proj::project_nonneg_ball(tau * lambda + beta * constraint, radius);
  return proj::project_nonneg_ball(inner / tau, radius);
}

Eigen::VectorXd spds_primal_step(const qp::ChargingProblem& problem, const IterationState& state,
                                 const SpdsConfig& config, int i) {
  if (i < 0 || i >= problem.n) throw DimensionError("EV index out of range");
  problem.check_primal(state.u);
  problem.check_dual(state.lambda);
  const auto off = static_cast<Eigen::Index>(i) * problem.K;
  const Eigen::VectorXd g = local_gradient(problem.p_bar(i), problem.aggregate(state.u), state.u.segment(off, problem.K),
                                           problem.rho, problem.d_matrix.col(i), state.lambda);
  return spds_primal_update(state.u.segment(off, problem.K), g, problem.e(i), config.alpha, config.tau_u);
}

Eigen::VectorXd spds_dual_step(const qp::ChargingProblem& problem, const IterationState& state,
                               const SpdsConfig& config) {
  return spds_dual_update(state.lambda, qp::grad_lambda(problem, state.u), config.beta, config.tau_lambda,
                          config.d_lambda);
}

namespace {

enum class Scheme { Shrunken, Classic, DualRegularized };

using Clock = std::chrono::steady_clock;

void check_finite(const Eigen::VectorXd& u, const Eigen::VectorXd& lambda, int iter) {
  if (!u.allFinite() || !lambda.allFinite())
    throw NumericError("non-finite iterate at iteration " + std::to_string(iter) + " (step size too large?)", iter);
}

// Jacobi sweep: every primal block and the dual use the iterate of round l.
SolveReport run_primal_dual(const qp::ChargingProblem& problem, const SpdsConfig& config, Scheme scheme,
                            const RunOptions& options) {
  config.validate(options.allow_unit_shrink || scheme != Scheme::Shrunken);

  SolveReport report;
  report.solver = scheme == Scheme::Shrunken ? "spds" : scheme == Scheme::Classic ? "pds" : "rpds";
  IterationState state = initial_state(problem);
  const int K = problem.K;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const auto start = Clock::now();
    const Eigen::VectorXd total = problem.aggregate(state.u);
    const Eigen::VectorXd cons = qp::grad_lambda(problem, state.u);

    Eigen::VectorXd next_u(state.u.size());
    int blown_up = 0;
#pragma omp parallel for schedule(static) reduction(+ : blown_up)
    for (int i = 0; i < problem.n; ++i) {
      const auto off = static_cast<Eigen::Index>(i) * K;
      const Eigen::VectorXd grad =
          local_gradient(problem.p_bar(i), total, state.u.segment(off, K), problem.rho, problem.d_matrix.col(i),
                         state.lambda);
      // Exceptions must not leave the parallel region; a failed block is
      // marked non-finite and reported after the loop.
      try {
        if (!grad.allFinite()) throw DomainError("non-finite gradient");
        if (scheme == Scheme::Shrunken)
          next_u.segment(off, K) = spds_primal_update(state.u.segment(off, K), grad, problem.e(i), config.alpha,
                                                      config.tau_u);
        else
          next_u.segment(off, K) = proj::project_box_hyperplane(state.u.segment(off, K) - config.alpha * grad,
                                                                problem.e(i));
      } catch (const DomainError&) {
        next_u.segment(off, K).setConstant(std::numeric_limits<double>::quiet_NaN());
        ++blown_up;
      }
    }

    if (blown_up || !cons.allFinite()) check_finite(next_u, cons, iter);
    Eigen::VectorXd next_lambda;
    try {
      switch (scheme) {
        case Scheme::Shrunken:
          next_lambda = spds_dual_update(state.lambda, cons, config.beta, config.tau_lambda, config.d_lambda);
          break;
        case Scheme::Classic:
          next_lambda = proj::project_nonneg_ball(state.lambda + config.beta * cons, config.d_lambda);
          break;
        case Scheme::DualRegularized:
          next_lambda = proj::project_nonneg_ball(
              state.lambda + config.beta * (cons - config.rpds_dual_reg * state.lambda), config.d_lambda);
          break;
      }
    } catch (const DomainError&) {
      throw NumericError("dual update overflowed at iteration " + std::to_string(iter), iter);
    }
    check_finite(next_u, next_lambda, iter);

    state.eps = (next_u - state.u).norm();
    state.u = std::move(next_u);
    state.lambda = std::move(next_lambda);
    state.iter = iter;

    IterationRecord rec;
    rec.objective = qp::objective(problem, state.u);
    rec.max_violation = qp::max_violation(problem, state.u);
    rec.eps = state.eps;
    rec.dual_norm = state.lambda.norm();
    rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    report.history.push_back(rec);
    report.aggregate_history.push_back(problem.aggregate(state.u));
    report.lambda_history.push_back(state.lambda);
    spdlog::debug("{} iter {:4d} obj {:.10e} viol {:.3e} eps {:.3e} |lambda| {:.3e}", report.solver, iter,
                  rec.objective, rec.max_violation, rec.eps, rec.dual_norm);
    if (options.observer) options.observer(state);

    if (state.eps <= config.tol) {
      report.reason = Termination::Tolerance;
      break;
    }
  }
  report.u = state.u;
  report.lambda = state.lambda;
  report.kkt = kkt_residuals(problem, report.u, report.lambda);
  return report;
}

}  // namespace

SolveReport run_spds(const qp::ChargingProblem& problem, const SpdsConfig& config, SpdsMode mode,
                     const RunOptions& options) {
  if (mode == SpdsMode::ViaSimnet) {
    config.validate(options.allow_unit_shrink);
    return simnet::run_simnet(problem, config, simnet::ChannelModel{}, nullptr, options.observer);
  }
  return run_primal_dual(problem, config, Scheme::Shrunken, options);
}

SolveReport run_pds(const qp::ChargingProblem& problem, const SpdsConfig& config, const RunOptions& options) {
  return run_primal_dual(problem, config, Scheme::Classic, options);
}

SolveReport run_rpds(const qp::ChargingProblem& problem, const SpdsConfig& config, const RunOptions& options) {
  return run_primal_dual(problem, config, Scheme::DualRegularized, options);
}

}  // namespace valleyfill::solvers
