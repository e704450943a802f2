#include "valleyfill/config.hpp"

#include <cstdlib>
#include <fstream>

#include "valleyfill/errors.hpp"

namespace valleyfill::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(std::string("field '") + key + "' has the wrong type");
  }
}

fleet::UniformRange range_or(const json& doc, const char* key, fleet::UniformRange fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_array() || v.size() != 2) throw InputError(std::string("field '") + key + "' must be [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

void apply_synthetic_baseline(Instance& instance, std::vector<int> houses, double floor_pu) {
  if (static_cast<int>(houses.size()) != instance.feeder.model.node_count)
    throw InputError("houses_per_node needs one entry per non-root node");
  auto base = fleet::synthetic_baseline(instance.scenario.horizon, houses);
  const double scale = fleet::scale_for_voltage_floor(instance.feeder.model, base, floor_pu);
  instance.scenario.baseline = base.scaled(scale);
  instance.houses_per_node = std::move(houses);
}

}  // namespace

Feeder parse_feeder(const json& doc) {
  Feeder feeder;
  feeder.name = get_or<std::string>(doc, "name", "feeder");
  feeder.base_kv = get_or(doc, "base_kv", 2.4017);
  const double base_kva = get_or(doc, "base_kva", 1000.0);
  const double v0_pu = get_or(doc, "v0_pu", 1.0);
  const auto unit = get_or<std::string>(doc, "impedance_unit", "pu");
  if (!(feeder.base_kv > 0.0) || !(base_kva > 0.0) || !(v0_pu > 0.0))
    throw InputError("feeder bases and head voltage must be positive");
  double z_scale = 1.0;
  if (unit == "ohm")
    z_scale = 1.0 / ((feeder.base_kv * 1e3) * (feeder.base_kv * 1e3) / (base_kva * 1e3));
  else if (unit != "pu")
    throw InputError("impedance_unit must be 'ohm' or 'pu'");
  if (!doc.contains("lines") || !doc.at("lines").is_array()) throw InputError("feeder file needs a 'lines' array");

  std::vector<grid::LineSegment> lines;
  for (const auto& l : doc.at("lines")) {
    try {
      lines.push_back({l.at("from").get<int>(), l.at("to").get<int>(), l.at("r").get<double>() * z_scale,
                       l.at("x").get<double>() * z_scale});
    } catch (const json::exception& e) {
      throw InputError(std::string("bad line entry: ") + e.what());
    }
  }
  feeder.model = grid::build_feeder(std::move(lines), v0_pu * v0_pu, base_kva);
  return feeder;
}

Feeder load_feeder(const fs::path& path) { return parse_feeder(read_json(path)); }

fs::path data_dir() {
  if (const char* env = std::getenv("VALLEYFILL_DATA")) return env;
  return VALLEYFILL_DATA_DIR;
}

fs::path default_feeder_path() { return data_dir() / "feeders" / "ieee13-mod.json"; }

Instance tiny_instance(TinyVariant variant) {
  Instance inst;
  inst.name = variant == TinyVariant::Slack ? "tiny-slack" : "tiny-binding";
  inst.feeder.name = "chain3";
  inst.feeder.base_kv = 2.4017;
  inst.feeder.model = grid::build_feeder({{0, 1, 0.005, 0.01}, {1, 2, 0.1, 0.1}}, 1.0, 100.0);

  auto& sc = inst.scenario;
  sc.horizon = {"19:00", 3, 1.0};
  fleet::EvSpec a{0, 2, 1.0, 6.6, 20.0, 0.3, 0.795};  // 9.9 kWh, e = 1.5
  fleet::EvSpec b{1, 2, 1.0, 6.6, 20.0, 0.304, 0.7};  // 7.92 kWh, e = 1.2
  sc.evs = {a, b};
  sc.energy_required_kwh.resize(2);
  for (int i = 0; i < 2; ++i)
    sc.energy_required_kwh(i) = fleet::energy_state_initial(sc.evs[i]);

  sc.baseline = fleet::BaselineLoad::zero(2, 3);
  // The valley comes from node 1; node 2 sits behind the weak line with a flat load.
  sc.baseline.node_p_kw << 8.0, 1.0, 4.0,  //
      1.0, 1.0, 1.0;
  sc.baseline.node_q_kvar = 0.3 * sc.baseline.node_p_kw;
  sc.baseline.aggregate_kw = sc.baseline.node_p_kw.colwise().sum().transpose();

  inst.assembly.rho = 1e-3;
  inst.assembly.nu_lower = variant == TinyVariant::Slack ? 0.97 : 0.99;

  auto& s = inst.spds;
  s.alpha = 5e-3;
  s.beta = 1e5;
  s.tau_u = s.tau_lambda = 0.974;
  s.d_lambda = 1e7;
  s.max_iters = 20000;
  s.tol = 1e-12;
  s.rpds_dual_reg = solvers::dual_reg_from_si(0.1, inst.feeder.base_kv);
  return inst;
}

Instance reference_instance(std::uint64_t seed, const std::optional<fs::path>& feeder_path) {
  Instance inst;
  inst.name = "paper";
  inst.feeder = load_feeder(feeder_path.value_or(default_feeder_path()));
  auto gen = fleet::reference_scenario_config();
  if (gen.node_count() != inst.feeder.model.node_count)
    throw InputError("reference scenario expects a feeder with " + std::to_string(gen.node_count()) + " load nodes");
  inst.scenario = fleet::generate_scenario(gen, seed);
  apply_synthetic_baseline(inst, gen.evs_per_node, 0.96);
  inst.assembly.rho = 1e-3;
  inst.assembly.nu_lower = 0.954;
  inst.spds = solvers::reference_spds_config(inst.feeder.base_kv);
  // The quoted alpha gives alpha * sum(Pbar^2) ~ 8.5 for 700 chargers, which
  // makes the Jacobi primal sweep flip between two schedules. Retuned pair:
  inst.spds.alpha = 4e-5;
  inst.spds.beta = 5e6;
  return inst;
}

void use_baseline_csv(Instance& instance, const fs::path& csv, double scale) {
  instance.scenario.baseline =
      fleet::load_baseline(csv, scale, instance.scenario.horizon.steps, instance.feeder.model.node_count);
  instance.houses_per_node.clear();
}

void apply_spds_overrides(solvers::SpdsConfig& s, const json& o) {
  if (!o.is_object()) throw InputError("'spds' must be an object");
  s.alpha = get_or(o, "alpha", s.alpha);
  s.beta = get_or(o, "beta", s.beta);
  s.tau_u = get_or(o, "tau_u", s.tau_u);
  s.tau_lambda = get_or(o, "tau_lambda", s.tau_lambda);
  s.d_lambda = get_or(o, "d_lambda", s.d_lambda);
  s.max_iters = get_or(o, "max_iters", s.max_iters);
  s.tol = get_or(o, "tol", s.tol);
  s.rpds_dual_reg = get_or(o, "rpds_dual_reg", s.rpds_dual_reg);
}

Instance load_instance(const fs::path& path, std::uint64_t seed) {
  const json doc = read_json(path);
  const fs::path dir = path.parent_path();
  Instance inst;
  inst.name = path.stem().string();
  inst.feeder = load_feeder(doc.contains("feeder") ? resolve(dir, doc.at("feeder").get<std::string>())
                                                   : default_feeder_path());
  const int h = inst.feeder.model.node_count;

  fleet::Horizon horizon;
  if (doc.contains("horizon")) {
    const auto& hz = doc.at("horizon");
    horizon.start_label = get_or<std::string>(hz, "start", horizon.start_label);
    horizon.steps = get_or(hz, "steps", horizon.steps);
    horizon.dt_hours = get_or(hz, "dt_hours", horizon.dt_hours);
  }
  horizon.validate();

  if (doc.contains("evs") == doc.contains("generate"))
    throw InputError("scenario needs exactly one of 'evs' or 'generate'");
  if (doc.contains("evs")) {
    inst.scenario.horizon = horizon;
    int id = 0;
    for (const auto& e : doc.at("evs")) {
      fleet::EvSpec spec;
      spec.id = id++;
      spec.node = get_or(e, "node", spec.node);
      spec.efficiency = get_or(e, "efficiency", spec.efficiency);
      spec.max_power_kw = get_or(e, "max_power_kw", spec.max_power_kw);
      spec.battery_kwh = get_or(e, "battery_kwh", spec.battery_kwh);
      spec.soc_initial = get_or(e, "soc_initial", spec.soc_initial);
      spec.soc_desired = get_or(e, "soc_desired", spec.soc_desired);
      spec.validate();
      if (spec.node < 1 || spec.node > h) throw InputError("EV node outside the feeder");
      fleet::local_slot_requirement(spec, horizon);
      inst.scenario.evs.push_back(spec);
    }
    inst.scenario.energy_required_kwh.resize(inst.scenario.evs.size());
    for (std::size_t i = 0; i < inst.scenario.evs.size(); ++i)
      inst.scenario.energy_required_kwh(i) = fleet::energy_state_initial(inst.scenario.evs[i]);
  } else {
    const auto& g = doc.at("generate");
    fleet::ScenarioConfig gen;
    gen.horizon = horizon;
    gen.evs_per_node = get_or(g, "evs_per_node", std::vector<int>(h, 0));
    if (gen.node_count() != h) throw InputError("evs_per_node needs one entry per non-root node");
    gen.capacity_kwh = range_or(g, "capacity_kwh", gen.capacity_kwh);
    gen.soc_initial = range_or(g, "soc_initial", gen.soc_initial);
    gen.soc_desired = range_or(g, "soc_desired", gen.soc_desired);
    gen.max_power_kw = get_or(g, "max_power_kw", gen.max_power_kw);
    gen.efficiency = get_or(g, "efficiency", gen.efficiency);
    inst.scenario = fleet::generate_scenario(gen, seed);
  }

  inst.scenario.baseline = fleet::BaselineLoad::zero(h, horizon.steps);
  if (doc.contains("baseline")) {
    const auto& b = doc.at("baseline");
    if (b.contains("csv"))
      use_baseline_csv(inst, resolve(dir, b.at("csv").get<std::string>()), get_or(b, "scale", 1.0));
    else if (b.contains("houses_per_node"))
      apply_synthetic_baseline(inst, b.at("houses_per_node").get<std::vector<int>>(),
                               get_or(b, "voltage_floor", 0.96));
    else
      throw InputError("baseline needs 'csv' or 'houses_per_node'");
  }

  inst.assembly.rho = get_or(doc, "rho", inst.assembly.rho);
  inst.assembly.nu_lower = get_or(doc, "nu_lower", inst.assembly.nu_lower);
  inst.spds = solvers::reference_spds_config(inst.feeder.base_kv);
  if (doc.contains("spds")) apply_spds_overrides(inst.spds, doc.at("spds"));
  return inst;
}

}  // namespace valleyfill::config
