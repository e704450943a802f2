#include "valleyfill/fleet.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "valleyfill/errors.hpp"

namespace valleyfill::fleet {

void EvSpec::validate() const {
  if (!(efficiency > 0.0 && efficiency <= 1.0)) throw DomainError("EV " + std::to_string(id) + ": efficiency must be in (0,1]");
  if (!(max_power_kw > 0.0)) throw DomainError("EV " + std::to_string(id) + ": max power must be positive");
  if (!(battery_kwh > 0.0)) throw DomainError("EV " + std::to_string(id) + ": battery capacity must be positive");
  if (!(soc_initial >= 0.0 && soc_initial <= 1.0) || !(soc_desired >= 0.0 && soc_desired <= 1.0))
    throw DomainError("EV " + std::to_string(id) + ": SOC values must lie in [0,1]");
  if (soc_desired < soc_initial) throw DomainError("EV " + std::to_string(id) + ": desired SOC below initial SOC");
}

void Horizon::validate() const {
  if (steps < 1) throw DomainError("horizon needs at least one step");
  if (!(dt_hours > 0.0)) throw DomainError("time step must be positive");
}

double Horizon::clock_hour(int t) const {
  int hh = 0, mm = 0;
  char sep = ':';
  std::istringstream in(start_label);
  if (!(in >> hh >> sep >> mm) || sep != ':') throw InputError("bad start label '" + start_label + "', expected HH:MM");
  double hour = hh + mm / 60.0 + t * dt_hours;
  return std::fmod(hour, 24.0);
}

BaselineLoad BaselineLoad::zero(int h, int steps) {
  return {Eigen::VectorXd::Zero(steps), Eigen::MatrixXd::Zero(h, steps), Eigen::MatrixXd::Zero(h, steps)};
}

BaselineLoad BaselineLoad::scaled(double factor) const {
  return {aggregate_kw * factor, node_p_kw * factor, node_q_kvar * factor};
}

double energy_state_initial(const EvSpec& spec) {
  spec.validate();
  return spec.battery_kwh * (spec.soc_desired - spec.soc_initial);
}

Eigen::VectorXd simulate_soc(const EvSpec& spec, const Eigen::VectorXd& rates, const Horizon& horizon) {
  spec.validate();
  horizon.validate();
  if (rates.size() != horizon.steps) throw DimensionError("rate vector length must equal the horizon length");
  const double gain = spec.efficiency * horizon.dt_hours * spec.max_power_kw / spec.battery_kwh;
  Eigen::VectorXd soc(horizon.steps + 1);
  soc(0) = spec.soc_initial;
  for (int t = 0; t < horizon.steps; ++t) {
    if (!(rates(t) >= 0.0 && rates(t) <= 1.0))
      throw DomainError("charging rate at step " + std::to_string(t) + " is outside [0,1]");
    soc(t + 1) = soc(t) + gain * rates(t);
  }
  return soc;
}

double local_slot_requirement(const EvSpec& spec, const Horizon& horizon) {
  horizon.validate();
  const double e = energy_state_initial(spec) / (spec.efficiency * horizon.dt_hours * spec.max_power_kw);
  if (e > horizon.steps + 1e-12)
    throw InfeasibleScenario("EV " + std::to_string(spec.id) + " needs " + std::to_string(e) +
                             " full-power slots but the window has " + std::to_string(horizon.steps));
  return std::min(e, static_cast<double>(horizon.steps));
}

ScenarioConfig reference_scenario_config() {
  ScenarioConfig config;
  config.evs_per_node.assign(12, 70);
  config.evs_per_node[0] = 0;  // node 1
  config.evs_per_node[5] = 0;  // node 6
  return config;
}

namespace {

// Portable uniform draw: the 53 high bits of a 64-bit Mersenne word.
double draw(std::mt19937_64& rng, UniformRange range) {
  double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return range.lo + (range.hi - range.lo) * unit;
}

}  // namespace

FleetScenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  config.horizon.validate();
  if (config.evs_per_node.empty()) throw InputError("scenario config lists no nodes");
  for (auto r : {config.capacity_kwh, config.soc_initial, config.soc_desired})
    if (r.hi < r.lo) throw DomainError("uniform range with hi < lo");

  std::mt19937_64 rng(seed);
  FleetScenario scenario;
  scenario.horizon = config.horizon;
  int id = 0;
  for (int slot = 0; slot < config.node_count(); ++slot) {
    for (int k = 0; k < config.evs_per_node[slot]; ++k) {
      EvSpec spec;
      spec.id = id;
      spec.node = slot + 1;
      spec.efficiency = config.efficiency;
      spec.max_power_kw = config.max_power_kw;
      bool accepted = false;
      for (int attempt = 0; attempt <= config.max_retries && !accepted; ++attempt) {
        spec.battery_kwh = draw(rng, config.capacity_kwh);
        spec.soc_initial = draw(rng, config.soc_initial);
        spec.soc_desired = draw(rng, config.soc_desired);
        try {
          local_slot_requirement(spec, config.horizon);
          accepted = true;
        } catch (const InfeasibleScenario&) {
        } catch (const DomainError&) {
        }
      }
      if (!accepted)
        throw InfeasibleScenario("could not draw a feasible EV at node " + std::to_string(spec.node) + " within " +
                                 std::to_string(config.max_retries) + " retries");
      scenario.evs.push_back(spec);
      ++id;
    }
  }
  scenario.energy_required_kwh.resize(static_cast<Eigen::Index>(scenario.evs.size()));
  for (std::size_t i = 0; i < scenario.evs.size(); ++i)
    scenario.energy_required_kwh(static_cast<Eigen::Index>(i)) = energy_state_initial(scenario.evs[i]);
  scenario.baseline = BaselineLoad::zero(config.node_count(), config.horizon.steps);
  return scenario;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

double parse_cell(const std::string& cell, int row, int col) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value))
    throw InputError("non-numeric cell '" + cell + "' at row " + std::to_string(row) + ", column " +
                     std::to_string(col));
  return value;
}

}  // namespace

BaselineLoad load_baseline(const std::filesystem::path& path, double scale, int expected_steps, int expected_nodes) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open baseline file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("baseline file " + path.string() + " is empty");
  auto header = split_csv(line);
  const int columns = 1 + 2 * expected_nodes;
  if (static_cast<int>(header.size()) != columns || header[0] != "step")
    throw InputError("baseline header must be step,node_1_p,node_1_q,... for " + std::to_string(expected_nodes) +
                     " nodes");
  for (int node = 1; node <= expected_nodes; ++node) {
    if (header[2 * node - 1] != "node_" + std::to_string(node) + "_p" ||
        header[2 * node] != "node_" + std::to_string(node) + "_q")
      throw InputError("unexpected baseline column '" + header[2 * node - 1] + "'");
  }

  std::vector<std::vector<double>> rows;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != columns)
      throw InputError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(columns));
    std::vector<double> values(columns);
    for (int c = 0; c < columns; ++c) values[c] = parse_cell(cells[c], row, c + 1);
    rows.push_back(std::move(values));
  }
  if (static_cast<int>(rows.size()) != expected_steps)
    throw InputError("baseline has " + std::to_string(rows.size()) + " rows, horizon has " +
                     std::to_string(expected_steps) + " steps");

  BaselineLoad baseline = BaselineLoad::zero(expected_nodes, expected_steps);
  for (int t = 0; t < expected_steps; ++t) {
    for (int node = 0; node < expected_nodes; ++node) {
      baseline.node_p_kw(node, t) = scale * rows[t][1 + 2 * node];
      baseline.node_q_kvar(node, t) = scale * rows[t][2 + 2 * node];
    }
  }
  baseline.aggregate_kw = baseline.node_p_kw.colwise().sum().transpose();
  return baseline;
}

void write_baseline(const std::filesystem::path& path, const BaselineLoad& baseline) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "step";
  for (int node = 1; node <= baseline.node_count(); ++node) out << ",node_" << node << "_p,node_" << node << "_q";
  out << '\n' << std::setprecision(17);
  for (int t = 0; t < baseline.steps(); ++t) {
    out << t;
    for (int node = 0; node < baseline.node_count(); ++node)
      out << ',' << baseline.node_p_kw(node, t) << ',' << baseline.node_q_kvar(node, t);
    out << '\n';
  }
}

double household_load_kw(double clock_hour) {
  auto circular = [](double a, double b) {
    double d = std::fmod(std::abs(a - b), 24.0);
    return std::min(d, 24.0 - d);
  };
  const double evening = circular(clock_hour, 18.0) / 3.5;
  const double morning = circular(clock_hour, 9.0) / 3.0;
  return 1.8 + 0.9 * std::exp(-evening * evening) + 0.5 * std::exp(-morning * morning);
}

BaselineLoad synthetic_baseline(const Horizon& horizon, const std::vector<int>& houses_per_node) {
  horizon.validate();
  const int h = static_cast<int>(houses_per_node.size());
  const double reactive_ratio = std::tan(std::acos(0.95));
  BaselineLoad baseline = BaselineLoad::zero(h, horizon.steps);
  for (int t = 0; t < horizon.steps; ++t) {
    const double per_house = household_load_kw(horizon.clock_hour(t));
    for (int node = 0; node < h; ++node) {
      baseline.node_p_kw(node, t) = houses_per_node[node] * per_house;
      baseline.node_q_kvar(node, t) = houses_per_node[node] * per_house * reactive_ratio;
    }
  }
  baseline.aggregate_kw = baseline.node_p_kw.colwise().sum().transpose();
  return baseline;
}

Eigen::MatrixXd baseline_voltage_drops(const grid::FeederModel& feeder, const BaselineLoad& baseline) {
  if (baseline.node_count() != feeder.node_count)
    throw DimensionError("baseline covers " + std::to_string(baseline.node_count()) + " nodes, feeder has " +
                         std::to_string(feeder.node_count));
  return 2.0 / feeder.base_kva * (feeder.r_matrix * baseline.node_p_kw + feeder.x_matrix * baseline.node_q_kvar);
}

double scale_for_voltage_floor(const grid::FeederModel& feeder, const BaselineLoad& baseline, double floor_pu) {
  if (!(floor_pu > 0.0 && floor_pu < 1.0)) throw DomainError("voltage floor must lie in (0,1)");
  const double worst_drop = baseline_voltage_drops(feeder, baseline).maxCoeff();
  if (!(worst_drop > 0.0)) throw DomainError("baseline causes no voltage drop; cannot scale to a floor");
  return feeder.v0_squared * (1.0 - floor_pu * floor_pu) / worst_drop;
}

}  // namespace valleyfill::fleet
