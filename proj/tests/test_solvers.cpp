#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"
#include "valleyfill/config.hpp"
#include "valleyfill/errors.hpp"
#include "valleyfill/proj.hpp"
#include "valleyfill/solvers.hpp"

using namespace valleyfill;
using solvers::SpdsConfig;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

bool bit_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

SpdsConfig small_config() {
  SpdsConfig c;
  c.alpha = 0.02;
  c.beta = 0.5;
  c.tau_u = 0.97;
  c.tau_lambda = 0.97;
  c.d_lambda = 100.0;
  c.max_iters = 40;
  c.tol = 0.0;
  return c;
}

double relative_gap(double value, double reference) { return std::abs(value - reference) / std::abs(reference); }

}  // namespace

TEST_CASE("config validation") {
  SpdsConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau_u = 1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK_NOTHROW(c.validate(true));
  c = SpdsConfig{};
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = SpdsConfig{};
  c.d_lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = SpdsConfig{};
  c.tau_lambda = 0.0;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("unit mapping keeps the unit-free products") {
  const double kv = 2.4017, vb2 = std::pow(kv * 1e3, 2);
  auto c = solvers::reference_spds_config(kv);
  CHECK(c.alpha == doctest::Approx(2.8e-4));
  CHECK(c.beta == doctest::Approx(1.8e-6 * vb2 * vb2));
  CHECK(c.d_lambda == doctest::Approx(5e5 * 1e-6 * vb2));
  CHECK(c.beta * c.rpds_dual_reg == doctest::Approx(1.8 * 0.1));
  CHECK(c.tau_u == 0.974);
  CHECK(c.max_iters == 25);
  CHECK_THROWS_AS(solvers::reference_spds_config(0.0), DomainError);
}

TEST_CASE("primal two-tier step on the K=2 hand instance") {
  Eigen::VectorXd u = vec({0.5, 0.5}), g = vec({1.0, -1.0});
  Eigen::VectorXd got = solvers::spds_primal_update(u, g, 1.0, 0.1, 0.9);
  Eigen::VectorXd inner = testing::oracle_box_hyperplane(vec({0.35, 0.55}), 1.0);
  CHECK((inner - vec({0.4, 0.6})).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::VectorXd expected = testing::oracle_box_hyperplane(inner / 0.9, 1.0);
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(got(0) == doctest::Approx(0.4 / 0.9 - (1.0 / 0.9 - 1.0) / 2).epsilon(1e-12));
}

TEST_CASE("dual two-tier step") {
  CHECK(solvers::spds_dual_update(vec({1.0}), vec({3.0}), 1.0, 0.5, 10.0)(0) == doctest::Approx(7.0));
  CHECK(solvers::spds_dual_update(vec({0.0, 0.0}), vec({-1.0, -2.0}), 1.0, 0.9, 10.0).cwiseAbs().maxCoeff() == 0.0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd lam = testing::random_vector(rng, 8, 0, 3);
    Eigen::VectorXd d = testing::random_vector(rng, 8, -5, 5);
    Eigen::VectorXd out = solvers::spds_dual_update(lam, d, 2.0, 0.9, 4.0);
    CHECK(proj::DualBallSet{8, 4.0}.contains(out));
  }
}

TEST_CASE("per-EV step helper matches the engine's first iteration") {
  std::mt19937_64 rng(12);
  auto p = testing::random_problem(rng, 3, 2, 5);
  auto cfg = small_config();
  auto state = solvers::initial_state(p);
  state.u = p.flat_schedule();
  state.lambda = testing::random_vector(rng, p.dual_size(), 0, 1);
  for (int i = 0; i < p.n; ++i) {
    Eigen::VectorXd blk = solvers::spds_primal_step(p, state, cfg, i);
    CHECK(proj::BoxSimplexSet{p.K, p.e(i)}.contains(blk));
  }
  CHECK_THROWS_AS(solvers::spds_primal_step(p, state, cfg, 3), DimensionError);
  Eigen::VectorXd lam = solvers::spds_dual_step(p, state, cfg);
  CHECK(proj::DualBallSet{p.dual_size(), cfg.d_lambda}.contains(lam));
}

TEST_CASE("unit shrink reproduces PDS bit for bit, and RPDS without regularisation is PDS") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto p = testing::random_problem(rng, 4, 3, 6);
    auto cfg = small_config();
    cfg.tau_u = cfg.tau_lambda = 1.0;
    solvers::RunOptions opts;
    opts.allow_unit_shrink = true;
    auto spds = solvers::run_spds(p, cfg, solvers::SpdsMode::Synchronous, opts);
    auto pds = solvers::run_pds(p, cfg);
    cfg.rpds_dual_reg = 0.0;
    auto rpds = solvers::run_rpds(p, cfg);
    REQUIRE(spds.iterations() == pds.iterations());
    for (int k = 0; k < spds.iterations(); ++k) {
      CHECK(bit_equal(spds.aggregate_history[k], pds.aggregate_history[k]));
      CHECK(bit_equal(spds.lambda_history[k], pds.lambda_history[k]));
      CHECK(bit_equal(rpds.lambda_history[k], pds.lambda_history[k]));
    }
    CHECK(bit_equal(spds.u, pds.u));
    CHECK(bit_equal(rpds.u, pds.u));
  }
}

TEST_CASE("trajectories, records and stopping") {
  auto inst = config::tiny_instance(config::TinyVariant::Binding);
  auto p = inst.assemble();
  auto cfg = inst.spds;
  cfg.max_iters = 7;
  int calls = 0;
  solvers::RunOptions opts;
  opts.observer = [&](const solvers::IterationState& s) { CHECK(s.iter == ++calls); };
  auto r = solvers::run_spds(p, cfg, solvers::SpdsMode::Synchronous, opts);
  CHECK(calls == 7);
  CHECK(r.iterations() == 7);
  CHECK(r.aggregate_history.size() == 7);
  CHECK(r.lambda_history.size() == 7);
  CHECK(r.reason == solvers::Termination::MaxIterations);
  for (const auto& l : r.lambda_history) CHECK(proj::DualBallSet{p.dual_size(), cfg.d_lambda}.contains(l));

  cfg.max_iters = 20000;
  auto full = solvers::run_spds(p, cfg);
  CHECK(full.reason == solvers::Termination::Tolerance);
  CHECK(full.history.back().eps <= cfg.tol);

  std::ostringstream csv;
  solvers::write_iteration_csv(csv, r);
  CHECK(csv.str().rfind("iter,objective,max_violation,eps,dual_norm\n", 0) == 0);
  auto j = solvers::to_json(r);
  CHECK(j.at("iterations").get<int>() == 7);
  CHECK(j.at("termination").get<std::string>() == "max_iterations");
}

TEST_CASE("oversized steps abort with a numeric error") {
  auto inst = config::tiny_instance(config::TinyVariant::Binding);
  auto p = inst.assemble();
  auto cfg = inst.spds;
  cfg.alpha = 1e308;
  cfg.beta = 1e308;
  cfg.d_lambda = 1e308;
  cfg.max_iters = 50;
  CHECK_THROWS_AS(solvers::run_spds(p, cfg), NumericError);
  CHECK_THROWS_AS(solvers::run_pds(p, cfg), NumericError);
}

TEST_CASE("centralized reference on tiny instances") {
  for (auto variant : {config::TinyVariant::Slack, config::TinyVariant::Binding}) {
    auto p = config::tiny_instance(variant).assemble();
    auto c = solvers::run_centralized(p);
    CHECK(c.reason == solvers::Termination::Converged);
    CHECK(c.kkt.worst() <= 1e-8);
    Eigen::VectorXd d = qp::constraint_values(p, c.u);
    CHECK(c.lambda.cwiseProduct(d).cwiseAbs().maxCoeff() <= 1e-6);
    if (variant == config::TinyVariant::Binding) CHECK(c.lambda.maxCoeff() > 1.0);
    if (variant == config::TinyVariant::Slack) CHECK(c.lambda.maxCoeff() == doctest::Approx(0.0));
  }
}

TEST_CASE("centralized agrees with a grid search on one EV and two steps") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(1, 1, -0.01);
  auto p = testing::make_problem(vec({2.0}), d, vec({-0.5, -0.5}), vec({1.0}), vec({3.0, 1.0}), 0.1);
  auto c = solvers::run_centralized(p);
  double best = 1e300, arg = 0.0;
  for (int k = 0; k <= 100000; ++k) {
    const double s = k / 100000.0;
    const double f = qp::objective(p, vec({s, 1 - s}));
    if (f < best) {
      best = f;
      arg = s;
    }
  }
  CHECK(qp::objective(p, c.u) <= best + 1e-9);
  CHECK(std::abs(c.u(0) - arg) < 1e-4);
}

TEST_CASE("constant baseline with slack constraints gives a flat fill") {
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(1, 3, -0.001);
  auto p = testing::make_problem(vec({3.0, 6.6, 5.0}), d, Eigen::VectorXd::Constant(6, -1.0), vec({2.0, 3.0, 1.5}),
                                 Eigen::VectorXd::Constant(6, 4.0), 0.0);
  auto c = solvers::run_centralized(p);
  Eigen::VectorXd agg = p.aggregate(c.u);
  CHECK(agg.maxCoeff() - agg.minCoeff() < 1e-6);

  auto single = testing::make_problem(vec({3.0}), Eigen::MatrixXd::Constant(1, 1, -0.001),
                                      Eigen::VectorXd::Constant(6, -1.0), vec({2.0}),
                                      Eigen::VectorXd::Constant(6, 4.0), 0.0);
  auto s = solvers::run_centralized(single);
  CHECK((s.u.array() - 2.0 / 6).abs().maxCoeff() < 1e-6);
}

TEST_CASE("centralized gives up when the budget is too small") {
  auto p = config::tiny_instance(config::TinyVariant::Binding).assemble();
  solvers::CentralizedOptions o;
  o.max_outer = 1;
  o.max_inner = 2;
  o.tol = 1e-14;
  CHECK_THROWS_AS(solvers::run_centralized(p, o), NumericError);
}

TEST_CASE("SPDS reaches the saddle point on the tiny instances") {
  for (auto variant : {config::TinyVariant::Slack, config::TinyVariant::Binding}) {
    auto inst = config::tiny_instance(variant);
    auto p = inst.assemble();
    auto ref = solvers::run_centralized(p);
    auto r = solvers::run_spds(p, inst.spds);
    CHECK(relative_gap(r.final_objective(), qp::objective(p, ref.u)) < 1e-4);
    CHECK(r.history.back().max_violation <= 1e-3);

    std::mt19937_64 rng(5);
    const double l_star = qp::lagrangian(p, r.u, r.lambda);
    const double slack = 1e-6 * std::max(1.0, std::abs(l_star));
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd lam = testing::random_vector(rng, p.dual_size(), 0, 2 * std::max(1.0, r.lambda.maxCoeff()));
      CHECK(qp::lagrangian(p, r.u, lam) <= l_star + slack);
      Eigen::VectorXd u(p.primal_size());
      for (int i = 0; i < p.n; ++i)
        u.segment(i * p.K, p.K) = proj::project_box_hyperplane(testing::random_vector(rng, p.K, -1, 2), p.e(i));
      CHECK(l_star <= qp::lagrangian(p, u, r.lambda) + slack);
    }
  }
}

TEST_CASE("RPDS leaves a gap that shrinks with the regularisation") {
  auto inst = config::tiny_instance(config::TinyVariant::Binding);
  auto p = inst.assemble();
  const double f_star = qp::objective(p, solvers::run_centralized(p).u);
  double previous = 1e300;
  for (double reg : {0.1, 0.01, 0.001}) {
    auto cfg = inst.spds;
    cfg.rpds_dual_reg = solvers::dual_reg_from_si(reg, inst.feeder.base_kv);
    auto r = solvers::run_rpds(p, cfg);
    const double gap = relative_gap(r.final_objective(), f_star);
    CHECK(gap > 0.0);
    CHECK(gap < previous);
    previous = gap;
  }
}

TEST_CASE("RPDS has no gap when no constraint binds") {
  auto inst = config::tiny_instance(config::TinyVariant::Slack);
  inst.assembly.nu_lower = 0.5;
  auto p = inst.assemble();
  const double f_star = qp::objective(p, solvers::run_centralized(p).u);
  auto r = solvers::run_rpds(p, inst.spds);
  CHECK(r.lambda.cwiseAbs().maxCoeff() == 0.0);
  CHECK(relative_gap(r.final_objective(), f_star) < 1e-8);
}

TEST_CASE("Slater dual bound") {
  auto p = config::tiny_instance(config::TinyVariant::Binding).assemble();
  auto slater = qp::find_slater_point(p);
  REQUIRE(slater.has_value());
  const double gamma = -qp::constraint_values(p, *slater).maxCoeff();
  const double bound = solvers::slater_dual_bound(p, *slater);
  CHECK(bound == doctest::Approx(qp::objective(p, *slater) / gamma + 1.0));
  auto ref = solvers::run_centralized(p);
  CHECK(ref.lambda.sum() <= bound);
  Eigen::VectorXd infeasible = Eigen::VectorXd::Zero(p.primal_size());
  for (int i = 0; i < p.n; ++i) infeasible.segment(i * p.K, p.K) = proj::project_box_hyperplane(vec({0, 1, 0}), p.e(i));
  if (qp::constraint_values(p, infeasible).maxCoeff() >= 0.0)
    CHECK_THROWS_AS(solvers::slater_dual_bound(p, infeasible), InfeasibleScenario);
}
