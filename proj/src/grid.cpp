#include "valleyfill/grid.hpp"

#include <cmath>
#include <queue>
#include <set>
#include <string>
#include <utility>

#include "valleyfill/errors.hpp"

namespace valleyfill::grid {

NodeId FeederModel::deepest_node() const {
  Eigen::Index best = 0;
  r_matrix.diagonal().maxCoeff(&best);
  return static_cast<NodeId>(best) + 1;
}

NodalLoad NodalLoad::zero(int h) {
  return {Eigen::VectorXd::Zero(h), Eigen::VectorXd::Zero(h)};
}

FeederModel build_feeder(std::vector<LineSegment> lines, double v0_squared, double base_kva) {
  if (lines.empty()) throw StructuralError("feeder has no line segments");
  if (!(v0_squared > 0.0)) throw DomainError("v0_squared must be positive");
  if (!(base_kva > 0.0)) throw DomainError("base_kva must be positive");

  const int h = static_cast<int>(lines.size());
  std::set<std::pair<NodeId, NodeId>> seen;
  std::vector<std::vector<std::pair<NodeId, int>>> adjacency(h + 1);
  for (int k = 0; k < h; ++k) {
    const auto& seg = lines[k];
    if (seg.from_node < 0 || seg.from_node > h || seg.to_node < 0 || seg.to_node > h)
      throw StructuralError("line " + std::to_string(seg.from_node) + "-" +
                            std::to_string(seg.to_node) + " references a node outside 0.." +
                            std::to_string(h));
    if (seg.from_node == seg.to_node) throw StructuralError("self-loop at node " + std::to_string(seg.to_node));
    if (!(seg.resistance >= 0.0) || !(seg.reactance >= 0.0))
      throw DomainError("line impedances must be nonnegative");
    auto key = std::minmax(seg.from_node, seg.to_node);
    if (!seen.insert(key).second)
      throw StructuralError("duplicate edge " + std::to_string(key.first) + "-" + std::to_string(key.second));
    adjacency[seg.from_node].push_back({seg.to_node, k});
    adjacency[seg.to_node].push_back({seg.from_node, k});
  }

  FeederModel feeder;
  feeder.node_count = h;
  feeder.v0_squared = v0_squared;
  feeder.base_kva = base_kva;
  feeder.parent.assign(h + 1, -2);
  feeder.parent_line.assign(h + 1, -1);
  feeder.parent[0] = -1;

  // h edges on h+1 nodes: connected <=> acyclic, but report which one failed.
  std::queue<NodeId> frontier;
  frontier.push(0);
  while (!frontier.empty()) {
    NodeId node = frontier.front();
    frontier.pop();
    feeder.order.push_back(node);
    for (auto [next, k] : adjacency[node]) {
      if (next == feeder.parent[node]) continue;
      if (feeder.parent[next] != -2) throw StructuralError("cycle detected through node " + std::to_string(next));
      feeder.parent[next] = node;
      feeder.parent_line[next] = k;
      frontier.push(next);
    }
  }
  for (NodeId node = 1; node <= h; ++node)
    if (feeder.parent[node] == -2) throw StructuralError("node " + std::to_string(node) + " is disconnected from the head");

  // Orient every segment away from the root.
  for (NodeId node = 1; node <= h; ++node) {
    auto& seg = lines[feeder.parent_line[node]];
    seg.from_node = feeder.parent[node];
    seg.to_node = node;
  }
  feeder.lines = std::move(lines);

  // R(i,j) accumulates along the root path of j for every ancestor of i.
  std::vector<std::vector<bool>> on_path(h + 1, std::vector<bool>(h + 1, false));
  for (NodeId node = 1; node <= h; ++node)
    for (NodeId a = node; a > 0; a = feeder.parent[a]) on_path[node][a] = true;

  feeder.r_matrix = Eigen::MatrixXd::Zero(h, h);
  feeder.x_matrix = Eigen::MatrixXd::Zero(h, h);
  for (NodeId i = 1; i <= h; ++i) {
    for (NodeId j = i; j <= h; ++j) {
      double r = 0.0, x = 0.0;
      for (NodeId a = j; a > 0; a = feeder.parent[a]) {
        if (!on_path[i][a]) continue;
        const auto& seg = feeder.lines[feeder.parent_line[a]];
        r += seg.resistance;
        x += seg.reactance;
      }
      feeder.r_matrix(i - 1, j - 1) = feeder.r_matrix(j - 1, i - 1) = r;
      feeder.x_matrix(i - 1, j - 1) = feeder.x_matrix(j - 1, i - 1) = x;
    }
  }
  return feeder;
}

namespace {

void check_load(const FeederModel& feeder, const NodalLoad& load) {
  if (load.real_power.size() != feeder.node_count || load.reactive_power.size() != feeder.node_count)
    throw DimensionError("nodal load has " + std::to_string(load.real_power.size()) + "/" +
                         std::to_string(load.reactive_power.size()) + " entries, feeder has " +
                         std::to_string(feeder.node_count) + " nodes");
}

}  // namespace

Eigen::VectorXd lindistflow_voltages(const FeederModel& feeder, const NodalLoad& load) {
  check_load(feeder, load);
  return (feeder.v0_squared - 2.0 * (feeder.r_matrix * load.real_power + feeder.x_matrix * load.reactive_power).array())
      .matrix();
}

Eigen::VectorXd distflow_voltages(const FeederModel& feeder, const NodalLoad& load, double tol, int max_sweeps) {
  check_load(feeder, load);
  if (!(tol > 0.0)) throw DomainError("sweep tolerance must be positive");

  const int h = feeder.node_count;
  // Indexed by node id; slot 0 is the head.
  std::vector<double> v(h + 1, feeder.v0_squared);
  std::vector<double> flow_p(h + 1), flow_q(h + 1);
  double residual = 0.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    // Backward: receiving-end flow = load + downstream sending-end flows; the
    // loss term uses |S|^2 / v at the receiving end.
    std::fill(flow_p.begin(), flow_p.end(), 0.0);
    std::fill(flow_q.begin(), flow_q.end(), 0.0);
    for (auto it = feeder.order.rbegin(); it != feeder.order.rend(); ++it) {
      NodeId node = *it;
      if (node == 0) continue;
      const auto& seg = feeder.lines[feeder.parent_line[node]];
      double p = flow_p[node] + load.real_power(node - 1);
      double q = flow_q[node] + load.reactive_power(node - 1);
      double current_sq = (p * p + q * q) / v[node];
      p += seg.resistance * current_sq;
      q += seg.reactance * current_sq;
      flow_p[node] = p;
      flow_q[node] = q;
      flow_p[feeder.parent[node]] += p;
      flow_q[feeder.parent[node]] += q;
    }
    // Forward: flow_p[node] is the sending-end flow of the segment into node.
    residual = 0.0;
    for (NodeId node : feeder.order) {
      if (node == 0) continue;
      const auto& seg = feeder.lines[feeder.parent_line[node]];
      NodeId up = feeder.parent[node];
      double p = flow_p[node], q = flow_q[node];
      double z_sq = seg.resistance * seg.resistance + seg.reactance * seg.reactance;
      double current_sq = (p * p + q * q) / v[up];
      double updated = v[up] - 2.0 * (seg.resistance * p + seg.reactance * q) + z_sq * current_sq;
      if (!std::isfinite(updated) || updated <= 0.0)
        throw NumericError("DistFlow sweep collapsed (load beyond voltage stability)", sweep, residual);
      residual = std::max(residual, std::abs(updated - v[node]));
      v[node] = updated;
    }
    if (residual < tol) {
      Eigen::VectorXd out(h);
      for (NodeId node = 1; node <= h; ++node) out(node - 1) = v[node];
      return out;
    }
  }
  throw NumericError("DistFlow did not converge within " + std::to_string(max_sweeps) + " sweeps", max_sweeps,
                     residual);
}

Eigen::VectorXd voltage_magnitudes(const FeederModel& feeder, const Eigen::VectorXd& squared) {
  return (squared.array().max(0.0).sqrt() / std::sqrt(feeder.v0_squared)).matrix();
}

}  // namespace valleyfill::grid
