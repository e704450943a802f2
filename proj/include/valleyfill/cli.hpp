#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "valleyfill/config.hpp"

namespace valleyfill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCertificateWarning = 2;

struct RunConfig {
  std::optional<std::filesystem::path> feeder;
  std::string scenario = "tiny";  // tiny | tiny-slack | tiny-binding | paper | path to JSON
  std::optional<std::string> baseline;  // "synthetic" or a CSV path
  std::string solver = "spds";          // spds | rpds | pds | centralized | simnet
  std::optional<double> alpha, beta, tau_u, tau_lambda, d_lambda, rho, nu_lower, tol, rpds_reg;
  std::optional<int> iters;
  double loss_prob = 0.0;
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";

  /// Throws InputError for an unknown solver or a missing file.
  void validate() const;
};

/// Scenario with every override from `config` applied.
config::Instance build_instance(const RunConfig& config);

/// Writes total_load.csv, voltages.csv, profiles.csv, duals.csv, report.json.
int cmd_run(const RunConfig& config, std::ostream& log);

/// Writes gap.csv (iter, spds_gap, rpds_gap) plus a summary report.json.
int cmd_compare(const RunConfig& config, std::ostream& log);

/// Prints the certificate; exit 2 when the sufficient condition fails.
int cmd_certify(const RunConfig& config, std::ostream& log);

}  // namespace valleyfill::cli
