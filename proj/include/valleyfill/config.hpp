#pragma once

// Feeder and scenario files, plus the two built-in instances.
//
// Feeder file (JSON):
//   { "base_kva": 1000, "base_kv": 2.4017, "v0_pu": 1.0,
//     "impedance_unit": "ohm" | "pu",
//     "lines": [ {"from": 0, "to": 1, "r": 0.07, "x": 0.22}, ... ] }
// Ohmic impedances are divided by z_base = (1000 kV)^2 / (1000 kVA).
//
// Scenario file (JSON), every key optional:
//   { "feeder": "feeders/ieee13-mod.json",
//     "horizon": {"start": "19:00", "steps": 52, "dt_hours": 0.25},
//     "evs": [ {"node": 2, "battery_kwh": 19, "soc_initial": 0.4,
//               "soc_desired": 0.8, "max_power_kw": 6.6, "efficiency": 1} ],
//     "generate": {"evs_per_node": [...], "capacity_kwh": [18, 20],
//                  "soc_initial": [0.3, 0.5], "soc_desired": [0.7, 0.9],
//                  "max_power_kw": 6.6, "efficiency": 1},
//     "baseline": {"csv": "load.csv", "scale": 1.0}
//               | {"houses_per_node": [...], "voltage_floor": 0.96},
//     "rho": 1e-3, "nu_lower": 0.954,
//     "spds": {"alpha": ..., "beta": ..., "tau_u": ..., "tau_lambda": ...,
//              "d_lambda": ..., "max_iters": ..., "tol": ..., "rpds_dual_reg": ...} }
// Relative paths resolve against the scenario file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "valleyfill/fleet.hpp"
#include "valleyfill/grid.hpp"
#include "valleyfill/qp.hpp"
#include "valleyfill/solvers.hpp"

namespace valleyfill::config {

struct Feeder {
  std::string name;
  grid::FeederModel model;
  double base_kv = 2.4017;  // line-to-neutral
};

Feeder parse_feeder(const nlohmann::json& doc);
Feeder load_feeder(const std::filesystem::path& path);

/// Directory holding feeders/ (compiled-in source tree unless VALLEYFILL_DATA is set).
std::filesystem::path data_dir();
std::filesystem::path default_feeder_path();

/// A fully specified problem ready for assembly.
struct Instance {
  std::string name;
  Feeder feeder;
  fleet::FleetScenario scenario;
  qp::AssemblyOptions assembly;
  solvers::SpdsConfig spds;
  std::vector<int> houses_per_node;  // empty unless the baseline is synthetic

  qp::ChargingProblem assemble() const { return qp::assemble_problem(feeder.model, scenario, assembly); }
};

enum class TinyVariant { Slack, Binding };

/// Three-bus chain, two EVs behind the weak second line, three one-hour steps.
/// The binding variant raises the voltage floor until the valley step binds.
Instance tiny_instance(TinyVariant variant);

/// 700 EVs on the modified IEEE-13 feeder with the synthetic double-hump
/// baseline scaled to a 0.96 p.u. voltage floor.
Instance reference_instance(std::uint64_t seed = 1, const std::optional<std::filesystem::path>& feeder_path = {});

/// Scenario JSON (see header comment). `seed` drives the "generate" section.
Instance load_instance(const std::filesystem::path& path, std::uint64_t seed);

/// Replaces the baseline with a CSV (kW per node and step) and rebuilds y_b inputs.
void use_baseline_csv(Instance& instance, const std::filesystem::path& csv, double scale = 1.0);

void apply_spds_overrides(solvers::SpdsConfig& spds, const nlohmann::json& overrides);

}  // namespace valleyfill::config
