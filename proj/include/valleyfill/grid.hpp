#pragma once

// Radial feeder model. Nodes are numbered 0..h with 0 the feeder head;
// vectors indexed by node use slot (node - 1).

#include <Eigen/Dense>
#include <vector>

namespace valleyfill::grid {

using NodeId = int;

struct LineSegment {
  NodeId from_node = 0;
  NodeId to_node = 0;
  double resistance = 0.0;  // p.u.
  double reactance = 0.0;   // p.u.
};

struct FeederModel {
  int node_count = 0;  // h, excludes the feeder head
  std::vector<LineSegment> lines;
  double v0_squared = 1.0;
  double base_kva = 1.0;  // power base used to convert kW/kVAr into p.u.

  // Path-intersection matrices: entry (i, j) sums the impedance of the
  // segments shared by the root paths of nodes i+1 and j+1.
  Eigen::MatrixXd r_matrix;
  Eigen::MatrixXd x_matrix;

  // parent[node] is the upstream node (parent[0] == -1); parent_line[node]
  // indexes `lines`. `order` lists nodes root-first (BFS).
  std::vector<NodeId> parent;
  std::vector<int> parent_line;
  std::vector<NodeId> order;

  /// Node with the largest diagonal entry of r_matrix (1-based id).
  NodeId deepest_node() const;
};

/// Nodal injections in p.u. on the feeder's power base, length h each.
struct NodalLoad {
  Eigen::VectorXd real_power;
  Eigen::VectorXd reactive_power;

  static NodalLoad zero(int h);
};

/// Builds the tree, checks it, and fills the R/X path-intersection matrices.
/// Throws StructuralError on cycles, duplicates, bad ids or disconnected nodes.
FeederModel build_feeder(std::vector<LineSegment> lines, double v0_squared = 1.0,
                         double base_kva = 1.0);

/// LinDistFlow: V = V0 - 2 R p - 2 X q (squared magnitudes).
Eigen::VectorXd lindistflow_voltages(const FeederModel& feeder, const NodalLoad& load);

/// Full DistFlow branch equations (with losses), solved by backward/forward
/// sweeps from a flat start. Throws NumericError if successive sweeps still
/// differ by more than `tol` after `max_sweeps`.
Eigen::VectorXd distflow_voltages(const FeederModel& feeder, const NodalLoad& load,
                                  double tol = 1e-10, int max_sweeps = 200);

/// sqrt(V_i) / |V0|, i.e. magnitudes in p.u. of the head voltage.
Eigen::VectorXd voltage_magnitudes(const FeederModel& feeder, const Eigen::VectorXd& squared);

}  // namespace valleyfill::grid
