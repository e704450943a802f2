#include "valleyfill/simnet.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <ostream>

#include "valleyfill/errors.hpp"

namespace valleyfill::simnet {

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void ChannelModel::validate() const {
  auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!ok(loss_probability) || !ok(downlink_loss_probability))
    throw DomainError("loss probabilities must lie in [0,1]");
}

std::string to_string(Direction direction) { return direction == Direction::Downlink ? "downlink" : "uplink"; }

Channel::Channel(ChannelModel model) : model_(model), rng_(model.seed) { model_.validate(); }

bool Channel::drop(Direction direction) {
  const bool enabled = direction == Direction::Uplink ? model_.uplink : model_.downlink;
  const double p = direction == Direction::Uplink ? model_.loss_probability : model_.downlink_loss_probability;
  if (!enabled || p <= 0.0) return false;
  return unit_(rng_) < p;
}

nlohmann::json to_json(const UplinkMessage& message) {
  return {{"round", message.round}, {"charger_id", message.charger_id}, {"rates", to_vector(message.rates)}};
}

nlohmann::json to_json(const DownlinkMessage& message) {
  return {{"round", message.round}, {"aggregate", to_vector(message.aggregate)}, {"lambda", to_vector(message.lambda)}};
}

nlohmann::json to_json(const TraceEntry& entry) {
  return {{"round", entry.round},
          {"direction", to_string(entry.direction)},
          {"charger_id", entry.charger_id},
          {"dropped", entry.dropped}};
}

ChargerAgent::ChargerAgent(int ev_index, double p_bar, Eigen::VectorXd d_column, double slot_requirement, double rho,
                           int steps)
    : ev_index_(ev_index),
      p_bar_(p_bar),
      d_column_(std::move(d_column)),
      slot_requirement_(slot_requirement),
      rho_(rho),
      rates_(Eigen::VectorXd::Zero(steps)) {}

UplinkMessage ChargerAgent::step(const DownlinkMessage& broadcast, double alpha, double tau_u) {
  if (!broadcast.aggregate.allFinite() || !broadcast.lambda.allFinite())
    throw NumericError("non-finite broadcast in round " + std::to_string(broadcast.round), broadcast.round);
  const Eigen::VectorXd grad =
      solvers::local_gradient(p_bar_, broadcast.aggregate, rates_, rho_, d_column_, broadcast.lambda);
  rates_ = solvers::spds_primal_update(rates_, grad, slot_requirement_, alpha, tau_u);
  last_sent_round_ = broadcast.round;
  return {broadcast.round, ev_index_, rates_};
}

std::vector<ChargerAgent> make_chargers(const qp::ChargingProblem& problem) {
  std::vector<ChargerAgent> chargers;
  chargers.reserve(problem.n);
  for (int i = 0; i < problem.n; ++i)
    chargers.emplace_back(i, problem.p_bar(i), problem.d_matrix.col(i), problem.e(i), problem.rho, problem.K);
  return chargers;
}

OperatorAgent::OperatorAgent(const qp::ChargingProblem& problem, const solvers::SpdsConfig& config)
    : problem_(problem),
      config_(config),
      schedule_(Eigen::VectorXd::Zero(problem.primal_size())),
      lambda_(Eigen::VectorXd::Zero(problem.dual_size())) {}

DownlinkMessage OperatorAgent::broadcast_payload() const { return {round_, problem_.aggregate(schedule_), lambda_}; }

void OperatorAgent::receive(const UplinkMessage& message) {
  if (message.charger_id < 0 || message.charger_id >= problem_.n)
    throw StructuralError("uplink from unknown charger " + std::to_string(message.charger_id));
  if (message.rates.size() != problem_.K) throw DimensionError("uplink carries the wrong number of rates");
  if (!message.rates.allFinite())
    throw NumericError("non-finite uplink from charger " + std::to_string(message.charger_id), message.round);
  schedule_.segment(static_cast<Eigen::Index>(message.charger_id) * problem_.K, problem_.K) = message.rates;
}

void OperatorAgent::dual_step(const Eigen::VectorXd& previous_schedule) {
  const Eigen::VectorXd cons = qp::grad_lambda(problem_, previous_schedule);
  if (!cons.allFinite()) throw NumericError("non-finite constraint values", round_);
  lambda_ = solvers::spds_dual_update(lambda_, cons, config_.beta, config_.tau_lambda, config_.d_lambda);
}

RoundResult run_round(OperatorAgent& op, std::vector<ChargerAgent>& chargers, Channel& channel,
                      const solvers::SpdsConfig& config, std::vector<TraceEntry>* trace) {
  const int n = op.problem().n;
  if (static_cast<int>(chargers.size()) != n)
    throw StructuralError("expected " + std::to_string(n) + " chargers, got " + std::to_string(chargers.size()));
  std::vector<bool> seen(n, false);
  for (const auto& c : chargers) {
    if (c.ev_index() < 0 || c.ev_index() >= n || seen[c.ev_index()])
      throw StructuralError("charger index collision at " + std::to_string(c.ev_index()));
    seen[c.ev_index()] = true;
  }

  const int round = op.round();
  const DownlinkMessage broadcast = op.broadcast_payload();
  if (!broadcast.aggregate.allFinite() || !broadcast.lambda.allFinite())
    throw NumericError("non-finite broadcast payload in round " + std::to_string(round), round);

  std::vector<char> reached(chargers.size());
  for (std::size_t k = 0; k < chargers.size(); ++k) {
    reached[k] = !channel.drop(Direction::Downlink);
    if (trace) trace->push_back({round, Direction::Downlink, chargers[k].ev_index(), !reached[k]});
  }

  std::vector<UplinkMessage> outbox(chargers.size());
  int failures = 0;
#pragma omp parallel for schedule(static) reduction(+ : failures)
  for (std::size_t k = 0; k < chargers.size(); ++k) {
    if (!reached[k]) continue;
    try {
      outbox[k] = chargers[k].step(broadcast, config.alpha, config.tau_u);
    } catch (...) {
      ++failures;
    }
  }
  if (failures) throw NumericError("charger update failed in round " + std::to_string(round), round);

  RoundResult result;
  const Eigen::VectorXd previous = op.schedule();
  int delivered = 0;
  for (std::size_t k = 0; k < chargers.size(); ++k) {
    if (!reached[k]) {
      ++result.skipped_chargers;
      continue;
    }
    const bool dropped = channel.drop(Direction::Uplink);
    if (trace) trace->push_back({round, Direction::Uplink, chargers[k].ev_index(), dropped});
    if (dropped) {
      ++result.lost_uplinks;
      continue;
    }
    op.receive(outbox[k]);
    ++delivered;
  }
  result.all_uplinks_lost = n > 0 && delivered == 0;

  op.dual_step(previous);
  result.state.u = op.schedule();
  result.state.lambda = op.lambda();
  result.state.iter = round;
  result.state.eps = (op.schedule() - previous).norm();
  op.advance_round();
  return result;
}

solvers::SolveReport run_simnet(const qp::ChargingProblem& problem, const solvers::SpdsConfig& config,
                                const ChannelModel& channel_model, std::ostream* trace_out,
                                const solvers::IterationObserver& observer) {
  config.validate(true);
  Channel channel(channel_model);
  OperatorAgent op(problem, config);
  auto chargers = make_chargers(problem);
  const bool certain_loss = channel_model.uplink && channel_model.loss_probability >= 1.0;

  solvers::SolveReport report;
  report.solver = "simnet";
  std::vector<TraceEntry> trace;
  solvers::IterationState state = solvers::initial_state(problem);
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const auto start = std::chrono::steady_clock::now();
    trace.clear();
    RoundResult round = run_round(op, chargers, channel, config, trace_out ? &trace : nullptr);
    if (trace_out)
      for (const auto& entry : trace) *trace_out << to_json(entry).dump() << '\n';
    state = std::move(round.state);
    report.lost_uplinks += round.lost_uplinks;

    solvers::IterationRecord rec;
    rec.objective = qp::objective(problem, state.u);
    rec.max_violation = qp::max_violation(problem, state.u);
    rec.eps = state.eps;
    rec.dual_norm = state.lambda.norm();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.history.push_back(rec);
    report.aggregate_history.push_back(problem.aggregate(state.u));
    report.lambda_history.push_back(state.lambda);
    spdlog::debug("simnet round {:4d} lost {:4d} eps {:.3e}", iter, round.lost_uplinks, state.eps);
    if (observer) observer(state);

    // A silent round leaves eps at zero without saying anything about convergence.
    if (round.all_uplinks_lost) {
      report.reason = solvers::Termination::DegenerateStall;
      if (certain_loss) break;
      continue;
    }
    report.reason = solvers::Termination::MaxIterations;
    if (state.eps <= config.tol) {
      report.reason = solvers::Termination::Tolerance;
      break;
    }
  }
  report.u = state.u;
  report.lambda = state.lambda;
  report.kkt = solvers::kkt_residuals(problem, report.u, report.lambda);
  return report;
}

}  // namespace valleyfill::simnet
