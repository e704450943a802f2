#pragma once

// Operator/charger message rounds over a seeded lossy channel.
//
// Each round the operator broadcasts the aggregate load and lambda, every
// reachable charger updates its own rates and reports them back, and the
// operator keeps the last value it received from chargers whose report was
// lost before taking its dual step.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "valleyfill/qp.hpp"
#include "valleyfill/solvers.hpp"

namespace valleyfill::simnet {

struct ChannelModel {
  double loss_probability = 0.0;           // uplink drop chance
  double downlink_loss_probability = 0.0;  // charger misses the broadcast and sits the round out
  std::uint64_t seed = 0;
  bool uplink = true;     // apply loss_probability to uplinks
  bool downlink = false;  // apply downlink_loss_probability to broadcasts

  void validate() const;
};

enum class Direction { Downlink, Uplink };

std::string to_string(Direction direction);

/// Bernoulli drop decisions from one seeded stream, consumed in a fixed order.
class Channel {
 public:
  explicit Channel(ChannelModel model);
  bool drop(Direction direction);
  const ChannelModel& model() const { return model_; }

 private:
  ChannelModel model_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

struct DownlinkMessage {
  int round = 0;
  Eigen::VectorXd aggregate;  // K
  Eigen::VectorXd lambda;     // h*K

  std::size_t payload_size() const { return static_cast<std::size_t>(aggregate.size() + lambda.size()); }
};

/// The only thing a charger ever sends: its id, the round tag and its rates.
struct UplinkMessage {
  int round = 0;
  int charger_id = 0;
  Eigen::VectorXd rates;  // K
};

nlohmann::json to_json(const UplinkMessage& message);
nlohmann::json to_json(const DownlinkMessage& message);

struct TraceEntry {
  int round = 0;
  Direction direction = Direction::Uplink;
  int charger_id = 0;
  bool dropped = false;
};

nlohmann::json to_json(const TraceEntry& entry);

class ChargerAgent {
 public:
  ChargerAgent(int ev_index, double p_bar, Eigen::VectorXd d_column, double slot_requirement, double rho, int steps);

  /// Local SPDS primal step from a broadcast; returns the report to send.
  UplinkMessage step(const DownlinkMessage& broadcast, double alpha, double tau_u);

  int ev_index() const { return ev_index_; }
  const Eigen::VectorXd& rates() const { return rates_; }
  int last_sent_round() const { return last_sent_round_; }

 private:
  int ev_index_;
  double p_bar_;
  Eigen::VectorXd d_column_;
  double slot_requirement_;
  double rho_;
  Eigen::VectorXd rates_;
  int last_sent_round_ = -1;
};

std::vector<ChargerAgent> make_chargers(const qp::ChargingProblem& problem);

class OperatorAgent {
 public:
  OperatorAgent(const qp::ChargingProblem& problem, const solvers::SpdsConfig& config);

  DownlinkMessage broadcast_payload() const;
  /// Stores the rates of one charger; rejects unknown ids and non-finite data.
  void receive(const UplinkMessage& message);
  /// Dual step on the constraint values of the schedule held before this
  /// round's reports were stored.
  void dual_step(const Eigen::VectorXd& previous_schedule);

  const Eigen::VectorXd& schedule() const { return schedule_; }
  const Eigen::VectorXd& lambda() const { return lambda_; }
  int round() const { return round_; }
  void advance_round() { ++round_; }
  const qp::ChargingProblem& problem() const { return problem_; }

 private:
  const qp::ChargingProblem& problem_;
  solvers::SpdsConfig config_;
  Eigen::VectorXd schedule_;  // last received rates, n*K
  Eigen::VectorXd lambda_;
  int round_ = 1;
};

struct RoundResult {
  solvers::IterationState state;
  int lost_uplinks = 0;
  int skipped_chargers = 0;
  bool all_uplinks_lost = false;
};

/// One full message round. Throws StructuralError when charger ids collide or
/// do not match the operator's problem, NumericError on a non-finite payload.
RoundResult run_round(OperatorAgent& op, std::vector<ChargerAgent>& chargers, Channel& channel,
                      const solvers::SpdsConfig& config, std::vector<TraceEntry>* trace = nullptr);

/// Runs rounds until eps <= tol or max_iters. A round in which every uplink
/// was lost ends the run as a degenerate stall. If `trace_out` is given, one
/// JSON line per message is written to it.
solvers::SolveReport run_simnet(const qp::ChargingProblem& problem, const solvers::SpdsConfig& config,
                                const ChannelModel& channel, std::ostream* trace_out = nullptr,
                                const solvers::IterationObserver& observer = {});

}  // namespace valleyfill::simnet
