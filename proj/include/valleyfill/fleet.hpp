#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "valleyfill/grid.hpp"

namespace valleyfill::fleet {

struct EvSpec {
  int id = 0;
  grid::NodeId node = 1;
  double efficiency = 1.0;  // eta in (0, 1]
  double max_power_kw = 6.6;
  double battery_kwh = 19.0;
  double soc_initial = 0.4;
  double soc_desired = 0.8;

  /// Throws DomainError if any field is outside its range.
  void validate() const;
};

struct Horizon {
  std::string start_label = "19:00";
  int steps = 52;
  double dt_hours = 0.25;

  void validate() const;
  /// Clock hour (0..24, fractional) at the start of step t.
  double clock_hour(int t) const;
};

/// Non-EV demand over the window, kW/kVAr. node_* are h x K.
struct BaselineLoad {
  Eigen::VectorXd aggregate_kw;
  Eigen::MatrixXd node_p_kw;
  Eigen::MatrixXd node_q_kvar;

  static BaselineLoad zero(int h, int steps);
  int node_count() const { return static_cast<int>(node_p_kw.rows()); }
  int steps() const { return static_cast<int>(node_p_kw.cols()); }
  BaselineLoad scaled(double factor) const;
};

struct FleetScenario {
  std::vector<EvSpec> evs;
  Horizon horizon;
  Eigen::VectorXd energy_required_kwh;
  BaselineLoad baseline;
};

/// E_r = capacity * (SOC_des - SOC_ini): the energy still to be delivered.
double energy_state_initial(const EvSpec& spec);

/// SOC trajectory (K+1 entries) under per-step charging rates in [0, 1].
Eigen::VectorXd simulate_soc(const EvSpec& spec, const Eigen::VectorXd& rates, const Horizon& horizon);

/// e_i = E_r / (eta * dt * Pmax): how many full-power slots the EV needs.
/// Throws InfeasibleScenario when e_i > K.
double local_slot_requirement(const EvSpec& spec, const Horizon& horizon);

struct UniformRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct ScenarioConfig {
  Horizon horizon;
  std::vector<int> evs_per_node;  // indexed by node - 1, size h
  UniformRange capacity_kwh{18.0, 20.0};
  UniformRange soc_initial{0.3, 0.5};
  UniformRange soc_desired{0.7, 0.9};
  double max_power_kw = 6.6;
  double efficiency = 1.0;
  int max_retries = 100;

  int node_count() const { return static_cast<int>(evs_per_node.size()); }
};

/// 12-node feeder, 70 chargers on every node except 1 and 6, 19:00-08:00 at 15 min.
ScenarioConfig reference_scenario_config();

/// Deterministic in (config, seed). The baseline is left at zero; attach one
/// with load_baseline() or synthetic_baseline().
FleetScenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

/// Reads `step,node_1_p,node_1_q,...,node_h_p,node_h_q` (kW/kVAr) and scales it.
BaselineLoad load_baseline(const std::filesystem::path& path, double scale, int expected_steps,
                           int expected_nodes);

void write_baseline(const std::filesystem::path& path, const BaselineLoad& baseline);

/// Residential evening/overnight profile for one household, kW, at a clock hour.
/// Evening peak near 18:00, overnight valley, smaller morning bump near 09:00.
double household_load_kw(double clock_hour);

/// Per-node baseline: houses_per_node[i] households at node i+1, power factor 0.95.
BaselineLoad synthetic_baseline(const Horizon& horizon, const std::vector<int>& houses_per_node);

/// Squared-voltage drops 2Rp + 2Xq caused by the baseline, h x K, p.u.^2.
Eigen::MatrixXd baseline_voltage_drops(const grid::FeederModel& feeder, const BaselineLoad& baseline);

/// Factor s such that the lowest LinDistFlow magnitude under s * baseline is
/// `floor_pu` (baseline drops scale linearly).
double scale_for_voltage_floor(const grid::FeederModel& feeder, const BaselineLoad& baseline, double floor_pu);

}  // namespace valleyfill::fleet
