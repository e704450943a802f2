#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "valleyfill/cli.hpp"
#include "valleyfill/errors.hpp"

namespace {

void add_common(CLI::App* cmd, valleyfill::cli::RunConfig& rc) {
  cmd->add_option("--feeder", rc.feeder, "Feeder JSON file");
  cmd->add_option("--scenario", rc.scenario, "tiny | tiny-slack | tiny-binding | paper | scenario JSON");
  cmd->add_option("--baseline", rc.baseline, "Baseline CSV, or 'synthetic'");
  cmd->add_option("--solver", rc.solver, "spds | rpds | pds | centralized | simnet")
      ->check(CLI::IsMember({"spds", "rpds", "pds", "centralized", "simnet"}));
  cmd->add_option("--alpha", rc.alpha, "Primal step size");
  cmd->add_option("--beta", rc.beta, "Dual step size");
  cmd->add_option("--tau-u", rc.tau_u, "Primal shrink factor");
  cmd->add_option("--tau-lambda", rc.tau_lambda, "Dual shrink factor");
  cmd->add_option("--d-lambda", rc.d_lambda, "Dual ball radius");
  cmd->add_option("--rho", rc.rho, "Proximal weight on the rates");
  cmd->add_option("--nu-lower", rc.nu_lower, "Lower voltage bound (p.u.)");
  cmd->add_option("--iters", rc.iters, "Maximum iterations");
  cmd->add_option("--tol", rc.tol, "Stopping tolerance on the iterate change");
  cmd->add_option("--rpds-reg", rc.rpds_reg, "Dual regularisation of the RPDS baseline");
  cmd->add_option("--loss-prob", rc.loss_prob, "Uplink loss probability (simnet)");
  cmd->add_option("--seed", rc.seed, "Random seed");
  cmd->add_option("--out", rc.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("valleyfill"));
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("VALLEYFILL_LOG")) spdlog::cfg::helpers::load_levels(level);

  CLI::App app{"Voltage-constrained EV valley filling"};
  app.require_subcommand(1);
  valleyfill::cli::RunConfig rc;
  auto* run = app.add_subcommand("run", "Solve one scenario and write CSV/JSON artifacts");
  auto* compare = app.add_subcommand("compare", "SPDS vs RPDS objective gaps against the centralized optimum");
  auto* certify = app.add_subcommand("certify", "Evaluate the convergence certificate");
  for (auto* cmd : {run, compare, certify}) add_common(cmd, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : valleyfill::cli::kExitError;
  }

  try {
    if (*run) return valleyfill::cli::cmd_run(rc, std::cout);
    if (*compare) return valleyfill::cli::cmd_compare(rc, std::cout);
    return valleyfill::cli::cmd_certify(rc, std::cout);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return valleyfill::cli::kExitError;
  }
}
