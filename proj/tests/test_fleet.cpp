#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "valleyfill/errors.hpp"
#include "valleyfill/fleet.hpp"
#include "valleyfill/proj.hpp"

using namespace valleyfill;
using fleet::EvSpec;
using fleet::Horizon;

namespace {

EvSpec ev(double cap, double soc0, double soc1, double eta = 1.0, double p = 6.6) {
  EvSpec s;
  s.battery_kwh = cap;
  s.soc_initial = soc0;
  s.soc_desired = soc1;
  s.efficiency = eta;
  s.max_power_kw = p;
  return s;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("valleyfill_test_" + name);
}

}  // namespace

TEST_CASE("energy still to deliver") {
  CHECK(fleet::energy_state_initial(ev(20, 0.3, 0.9)) == doctest::Approx(12.0).epsilon(1e-14));
  CHECK(fleet::energy_state_initial(ev(18, 0.5, 0.7)) == doctest::Approx(3.6).epsilon(1e-14));
  CHECK(fleet::energy_state_initial(ev(18, 0.5, 0.5)) == 0.0);
  CHECK_THROWS_AS(fleet::energy_state_initial(ev(18, 0.7, 0.5)), DomainError);
  CHECK_THROWS_AS(fleet::energy_state_initial(ev(18, 0.5, 0.7, 0.0)), DomainError);
}

TEST_CASE("SOC trajectory") {
  Horizon hz{"19:00", 12, 0.25};
  auto spec = ev(19.8, 0.0, 1.0);
  auto full = fleet::simulate_soc(spec, Eigen::VectorXd::Ones(12), hz);
  CHECK(full.size() == 13);
  CHECK(full(12) == doctest::Approx(1.0).epsilon(1e-14));

  auto idle = fleet::simulate_soc(ev(19, 0.4, 0.8), Eigen::VectorXd::Zero(12), hz);
  CHECK((idle.array() == 0.4).all());

  Eigen::VectorXd bad = Eigen::VectorXd::Zero(12);
  bad(3) = 1.2;
  CHECK_THROWS_AS(fleet::simulate_soc(spec, bad, hz), DomainError);
  bad(3) = -0.1;
  CHECK_THROWS_AS(fleet::simulate_soc(spec, bad, hz), DomainError);
  CHECK_THROWS_AS(fleet::simulate_soc(spec, Eigen::VectorXd::Zero(11), hz), DimensionError);
}

TEST_CASE("slot requirement") {
  Horizon hz{"19:00", 52, 0.25};
  CHECK(fleet::local_slot_requirement(ev(20, 0.3, 0.9, 0.9), hz) == doctest::Approx(8.080808080808).epsilon(1e-12));
  CHECK(fleet::local_slot_requirement(ev(20, 0.5, 0.5), hz) == 0.0);

  Horizon short_hz{"19:00", 4, 0.25};
  CHECK_THROWS_AS(fleet::local_slot_requirement(ev(20, 0.1, 0.9), short_hz), InfeasibleScenario);
  // e == K exactly: 4 slots of 6.6 kW * 0.25 h = 6.6 kWh
  CHECK(fleet::local_slot_requirement(ev(6.6, 0.0, 1.0), short_hz) == doctest::Approx(4.0));
}

TEST_CASE("any schedule in the local set reaches the desired SOC") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Horizon hz{"19:00", 52, 0.25};
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = ev(18 + 2 * unit(rng), 0.3 + 0.2 * unit(rng), 0.7 + 0.2 * unit(rng), 0.85 + 0.15 * unit(rng));
    double e = fleet::local_slot_requirement(spec, hz);
    Eigen::VectorXd u = proj::project_box_hyperplane(testing::random_vector(rng, 52, -1, 2), e);
    auto soc = fleet::simulate_soc(spec, u, hz);
    CHECK(std::abs(soc(52) - spec.soc_desired) < 1e-9);
  }
}

TEST_CASE("scenario generation") {
  auto config = fleet::reference_scenario_config();
  auto a = fleet::generate_scenario(config, 42);
  auto b = fleet::generate_scenario(config, 42);
  auto c = fleet::generate_scenario(config, 43);
  REQUIRE(a.evs.size() == 700);
  int on_node_1 = 0, on_node_6 = 0;
  bool differs = false;
  for (std::size_t i = 0; i < a.evs.size(); ++i) {
    CHECK(a.evs[i].battery_kwh == b.evs[i].battery_kwh);
    CHECK(a.evs[i].soc_initial == b.evs[i].soc_initial);
    CHECK(a.evs[i].soc_desired == b.evs[i].soc_desired);
    CHECK(a.evs[i].node == b.evs[i].node);
    differs = differs || a.evs[i].battery_kwh != c.evs[i].battery_kwh;
    CHECK(a.evs[i].battery_kwh >= 18.0);
    CHECK(a.evs[i].battery_kwh <= 20.0);
    CHECK(a.evs[i].soc_initial >= 0.3);
    CHECK(a.evs[i].soc_initial <= 0.5);
    CHECK(a.evs[i].soc_desired >= 0.7);
    CHECK(a.evs[i].soc_desired <= 0.9);
    CHECK(a.evs[i].max_power_kw == 6.6);
    on_node_1 += a.evs[i].node == 1;
    on_node_6 += a.evs[i].node == 6;
  }
  CHECK(differs);
  CHECK(on_node_1 == 0);
  CHECK(on_node_6 == 0);
  CHECK(a.energy_required_kwh.size() == 700);

  fleet::ScenarioConfig fixed;
  fixed.evs_per_node = {3, 2};
  fixed.capacity_kwh = {19, 19};
  fixed.soc_initial = {0.4, 0.4};
  fixed.soc_desired = {0.8, 0.8};
  auto same = fleet::generate_scenario(fixed, 5);
  REQUIRE(same.evs.size() == 5);
  for (const auto& s : same.evs) {
    CHECK(s.battery_kwh == 19.0);
    CHECK(s.soc_initial == 0.4);
    CHECK(s.soc_desired == 0.8);
  }

  fleet::ScenarioConfig impossible = fixed;
  impossible.horizon.steps = 2;
  CHECK_THROWS_AS(fleet::generate_scenario(impossible, 1), InfeasibleScenario);
}

TEST_CASE("baseline CSV round trip and scaling") {
  Horizon hz{"19:00", 52, 0.25};
  auto base = fleet::synthetic_baseline(hz, {5, 0, 7});
  auto path = temp_file("baseline.csv");
  fleet::write_baseline(path, base);

  auto same = fleet::load_baseline(path, 1.0, 52, 3);
  CHECK((same.node_p_kw - base.node_p_kw).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.node_q_kvar - base.node_q_kvar).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.aggregate_kw - base.aggregate_kw).cwiseAbs().maxCoeff() < 1e-12);

  auto zero = fleet::load_baseline(path, 0.0, 52, 3);
  CHECK(zero.aggregate_kw.cwiseAbs().maxCoeff() == 0.0);
  auto doubled = fleet::load_baseline(path, 2.0, 52, 3);
  CHECK((doubled.aggregate_kw - 2.0 * same.aggregate_kw).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(fleet::load_baseline(path, 1.0, 51, 3), InputError);
  CHECK_THROWS_AS(fleet::load_baseline(path, 1.0, 52, 2), InputError);
  CHECK_THROWS_AS(fleet::load_baseline(temp_file("missing.csv"), 1.0, 52, 3), InputError);

  auto broken = temp_file("broken.csv");
  {
    std::ofstream out(broken);
    out << "step,node_1_p,node_1_q\n0,1.0,abc\n";
  }
  CHECK_THROWS_AS(fleet::load_baseline(broken, 1.0, 1, 1), InputError);
  std::filesystem::remove(path);
  std::filesystem::remove(broken);
}

TEST_CASE("zero baseline leaves every node at the head voltage") {
  auto f = grid::build_feeder({{0, 1, 0.01, 0.01}, {1, 2, 0.02, 0.01}}, 1.0, 100.0);
  auto drops = fleet::baseline_voltage_drops(f, fleet::BaselineLoad::zero(2, 4));
  CHECK(drops.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synthetic profile shape over the evening window") {
  Horizon hz{"19:00", 52, 0.25};
  auto base = fleet::synthetic_baseline(hz, {70, 70});
  Eigen::Index peak = 0, valley = 0;
  base.aggregate_kw.maxCoeff(&peak);
  base.aggregate_kw.minCoeff(&valley);
  CHECK(peak == 0);
  double valley_hour = hz.clock_hour(static_cast<int>(valley));
  CHECK(valley_hour >= 2.0);
  CHECK(valley_hour <= 4.0);
  // power factor 0.95
  CHECK(base.node_q_kvar(0, 0) / base.node_p_kw(0, 0) == doctest::Approx(std::tan(std::acos(0.95))));
}

TEST_CASE("voltage floor scaling") {
  auto f = grid::build_feeder({{0, 1, 0.01, 0.01}, {1, 2, 0.02, 0.01}}, 1.0, 100.0);
  Horizon hz{"19:00", 8, 0.25};
  auto base = fleet::synthetic_baseline(hz, {3, 4});
  double s = fleet::scale_for_voltage_floor(f, base, 0.96);
  auto drops = fleet::baseline_voltage_drops(f, base.scaled(s));
  CHECK(std::sqrt(1.0 - drops.maxCoeff()) == doctest::Approx(0.96).epsilon(1e-12));
  CHECK_THROWS_AS(fleet::scale_for_voltage_floor(f, fleet::BaselineLoad::zero(2, 8), 0.96), DomainError);
}
