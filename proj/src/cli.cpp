#include "valleyfill/cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "valleyfill/errors.hpp"
#include "valleyfill/simnet.hpp"

namespace valleyfill::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

bool is_builtin(const std::string& scenario) {
  return scenario == "tiny" || scenario == "tiny-slack" || scenario == "tiny-binding" || scenario == "paper";
}

solvers::SolveReport dispatch(const std::string& solver, const qp::ChargingProblem& problem,
                              const solvers::SpdsConfig& spds, const RunConfig& config, const fs::path& trace_path) {
  if (solver == "spds") return solvers::run_spds(problem, spds);
  if (solver == "pds") return solvers::run_pds(problem, spds);
  if (solver == "rpds") return solvers::run_rpds(problem, spds);
  if (solver == "centralized") return solvers::run_centralized(problem);
  simnet::ChannelModel channel;
  channel.loss_probability = config.loss_prob;
  channel.seed = config.seed;
  std::ofstream trace = open_out(trace_path);
  return simnet::run_simnet(problem, spds, channel, &trace);
}

// Largest |delivered energy - required energy| relative to the requirement.
double energy_residual(const config::Instance& inst, const qp::ChargingProblem& problem, const Eigen::VectorXd& u) {
  double worst = 0.0;
  for (int i = 0; i < problem.n; ++i) {
    const auto& ev = inst.scenario.evs[i];
    const double required = inst.scenario.energy_required_kwh(i);
    const double delivered = ev.efficiency * inst.scenario.horizon.dt_hours * ev.max_power_kw *
                             u.segment(static_cast<Eigen::Index>(i) * problem.K, problem.K).sum();
    if (required > 0.0) worst = std::max(worst, std::abs(delivered - required) / required);
  }
  return worst;
}

void write_total_load(const fs::path& path, const qp::ChargingProblem& problem, const solvers::SolveReport& report) {
  auto out = open_out(path);
  out << "baseline";
  for (std::size_t k = 0; k < report.aggregate_history.size(); ++k) out << ",iter_" << k + 1;
  out << '\n';
  for (int t = 0; t < problem.K; ++t) {
    out << problem.p_b(t);
    for (const auto& agg : report.aggregate_history) out << ',' << agg(t);
    out << '\n';
  }
}

json write_voltages(const fs::path& path, const config::Instance& inst, const qp::ChargingProblem& problem,
                    const Eigen::VectorXd& u) {
  const auto& feeder = inst.feeder.model;
  const Eigen::MatrixXd lin = qp::schedule_voltages(feeder, inst.scenario, problem, u);
  const Eigen::MatrixXd full = qp::schedule_voltages_distflow(feeder, inst.scenario, problem, u);
  auto out = open_out(path);
  out << "node,step,lindistflow_pu,distflow_pu\n";
  double min_lin = 1e300, min_full = 1e300, max_gap = 0.0;
  for (int t = 0; t < problem.K; ++t) {
    const Eigen::VectorXd a = grid::voltage_magnitudes(feeder, lin.col(t));
    const Eigen::VectorXd b = grid::voltage_magnitudes(feeder, full.col(t));
    for (int node = 0; node < problem.h; ++node) {
      out << node + 1 << ',' << t << ',' << a(node) << ',' << b(node) << '\n';
      min_lin = std::min(min_lin, a(node));
      min_full = std::min(min_full, b(node));
      max_gap = std::max(max_gap, a(node) - b(node));
    }
  }
  return {{"min_lindistflow_pu", min_lin}, {"min_distflow_pu", min_full}, {"max_discrepancy_pu", max_gap}};
}

void write_profiles(const fs::path& path, const config::Instance& inst, const qp::ChargingProblem& problem,
                    const Eigen::VectorXd& u) {
  auto out = open_out(path);
  out << "ev,node,step,rate,power_kw,soc\n";
  for (int i = 0; i < problem.n; ++i) {
    const auto& ev = inst.scenario.evs[i];
    const Eigen::VectorXd rates = u.segment(static_cast<Eigen::Index>(i) * problem.K, problem.K).cwiseMax(0.0).cwiseMin(1.0);
    const Eigen::VectorXd soc = fleet::simulate_soc(ev, rates, inst.scenario.horizon);
    for (int t = 0; t < problem.K; ++t)
      out << ev.id << ',' << ev.node << ',' << t << ',' << rates(t) << ',' << rates(t) * ev.max_power_kw << ','
          << soc(t + 1) << '\n';
  }
}

void write_duals(const fs::path& path, const qp::ChargingProblem& problem, const solvers::SolveReport& report) {
  auto out = open_out(path);
  out << "iter,step,node,lambda\n";
  for (std::size_t k = 0; k < report.lambda_history.size(); ++k) {
    const auto& lam = report.lambda_history[k];
    for (int t = 0; t < problem.K; ++t)
      for (int node = 0; node < problem.h; ++node)
        out << k + 1 << ',' << t << ',' << node + 1 << ',' << lam(static_cast<Eigen::Index>(t) * problem.h + node)
            << '\n';
  }
}

}  // namespace

void RunConfig::validate() const {
  static const std::vector<std::string> solvers{"spds", "rpds", "pds", "centralized", "simnet"};
  if (std::find(solvers.begin(), solvers.end(), solver) == solvers.end())
    throw InputError("unknown solver '" + solver + "'");
  if (!is_builtin(scenario) && !fs::exists(scenario)) throw InputError("scenario file " + scenario + " not found");
  if (feeder && !fs::exists(*feeder)) throw InputError("feeder file " + feeder->string() + " not found");
  if (baseline && *baseline != "synthetic" && !fs::exists(*baseline))
    throw InputError("baseline file " + *baseline + " not found");
  if (!(loss_prob >= 0.0 && loss_prob <= 1.0)) throw InputError("--loss-prob must lie in [0,1]");
}

config::Instance build_instance(const RunConfig& rc) {
  rc.validate();
  config::Instance inst;
  if (rc.scenario == "tiny" || rc.scenario == "tiny-binding")
    inst = config::tiny_instance(config::TinyVariant::Binding);
  else if (rc.scenario == "tiny-slack")
    inst = config::tiny_instance(config::TinyVariant::Slack);
  else if (rc.scenario == "paper")
    inst = config::reference_instance(rc.seed, rc.feeder);
  else
    inst = config::load_instance(rc.scenario, rc.seed);

  if (rc.feeder && rc.scenario != "paper") {
    auto feeder = config::load_feeder(*rc.feeder);
    if (feeder.model.node_count != inst.feeder.model.node_count)
      throw InputError("--feeder has a different node count than the scenario");
    inst.feeder = std::move(feeder);
  }
  if (rc.baseline && *rc.baseline != "synthetic") config::use_baseline_csv(inst, *rc.baseline);

  auto& s = inst.spds;
  if (rc.alpha) s.alpha = *rc.alpha;
  if (rc.beta) s.beta = *rc.beta;
  if (rc.tau_u) s.tau_u = *rc.tau_u;
  if (rc.tau_lambda) s.tau_lambda = *rc.tau_lambda;
  if (rc.d_lambda) s.d_lambda = *rc.d_lambda;
  if (rc.tol) s.tol = *rc.tol;
  if (rc.rpds_reg) s.rpds_dual_reg = *rc.rpds_reg;
  if (rc.iters) s.max_iters = *rc.iters;
  if (rc.rho) inst.assembly.rho = *rc.rho;
  if (rc.nu_lower) inst.assembly.nu_lower = *rc.nu_lower;
  return inst;
}

int cmd_run(const RunConfig& rc, std::ostream& log) {
  const config::Instance inst = build_instance(rc);
  const qp::ChargingProblem problem = inst.assemble();
  if (!problem.slater_holds) spdlog::warn("flat schedule is not strictly feasible; Slater point not verified");
  fs::create_directories(rc.out);

  const solvers::SolveReport report = dispatch(rc.solver, problem, inst.spds, rc, rc.out / "trace.jsonl");
  const solvers::CertificateReport cert = solvers::certify(problem, inst.spds);

  write_total_load(rc.out / "total_load.csv", problem, report);
  const json volt = write_voltages(rc.out / "voltages.csv", inst, problem, report.u);
  write_profiles(rc.out / "profiles.csv", inst, problem, report.u);
  write_duals(rc.out / "duals.csv", problem, report);

  json doc;
  doc["scenario"] = inst.name;
  doc["seed"] = rc.seed;
  doc["problem"] = {{"n", problem.n},
                    {"h", problem.h},
                    {"K", problem.K},
                    {"rho", problem.rho},
                    {"nu_lower", problem.nu_lower},
                    {"slater_holds", problem.slater_holds},
                    {"baseline_strictly_feasible", problem.baseline_strictly_feasible}};
  doc["config"] = {{"alpha", inst.spds.alpha},         {"beta", inst.spds.beta},
                   {"tau_u", inst.spds.tau_u},         {"tau_lambda", inst.spds.tau_lambda},
                   {"d_lambda", inst.spds.d_lambda},   {"max_iters", inst.spds.max_iters},
                   {"tol", inst.spds.tol},             {"rpds_dual_reg", inst.spds.rpds_dual_reg}};
  doc["report"] = solvers::to_json(report);
  doc["certificate"] = solvers::to_json(cert);
  doc["checks"] = volt;
  doc["checks"]["energy_residual_rel"] = energy_residual(inst, problem, report.u);
  doc["checks"]["max_violation"] = qp::max_violation(problem, report.u);
  auto out = open_out(rc.out / "report.json");
  out << doc.dump(2) << '\n';

  log << report.solver << ": " << report.iterations() << " iterations (" << solvers::to_string(report.reason)
      << "), objective " << std::setprecision(10) << report.final_objective() << ", max violation "
      << qp::max_violation(problem, report.u) << ", worst KKT residual " << report.kkt.worst() << '\n';
  return kExitOk;
}

int cmd_compare(const RunConfig& rc, std::ostream& log) {
  const config::Instance inst = build_instance(rc);
  const qp::ChargingProblem problem = inst.assemble();
  fs::create_directories(rc.out);

  const auto reference = solvers::run_centralized(problem);
  const double optimum = reference.final_objective();
  const auto spds = solvers::run_spds(problem, inst.spds);
  const auto rpds = solvers::run_rpds(problem, inst.spds);

  auto out = open_out(rc.out / "gap.csv");
  out << "iter,spds_gap,rpds_gap\n";
  const std::size_t rows = std::max(spds.history.size(), rpds.history.size());
  for (std::size_t k = 0; k < rows; ++k) {
    out << k + 1 << ',';
    if (k < spds.history.size()) out << spds.history[k].objective - optimum;
    out << ',';
    if (k < rpds.history.size()) out << rpds.history[k].objective - optimum;
    out << '\n';
  }

  json doc{{"scenario", inst.name},
           {"optimum", optimum},
           {"centralized_kkt", reference.kkt.worst()},
           {"spds", {{"iterations", spds.iterations()}, {"terminal_gap", spds.final_objective() - optimum}}},
           {"rpds", {{"iterations", rpds.iterations()}, {"terminal_gap", rpds.final_objective() - optimum}}}};
  auto rep = open_out(rc.out / "report.json");
  rep << doc.dump(2) << '\n';
  log << std::setprecision(6) << "optimum " << optimum << "; terminal gap spds " << spds.final_objective() - optimum
      << ", rpds " << rpds.final_objective() - optimum << '\n';
  return kExitOk;
}

int cmd_certify(const RunConfig& rc, std::ostream& log) {
  const config::Instance inst = build_instance(rc);
  const qp::ChargingProblem problem = inst.assemble();
  const auto cert = solvers::certify(problem, inst.spds);
  log << solvers::to_json(cert).dump(2) << '\n';
  if (cert.condition_holds) {
    log << "certificate: sufficient condition holds, varrho = " << cert.varrho << '\n';
    return kExitOk;
  }
  log << "certificate: sufficient condition fails (c = " << cert.c << ")\n";
  return kExitCertificateWarning;
}

}  // namespace valleyfill::cli
