#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "valleyfill/fleet.hpp"
#include "valleyfill/grid.hpp"
#include "valleyfill/qp.hpp"

namespace testing {

inline valleyfill::qp::ChargingProblem make_problem(const Eigen::VectorXd& p_bar, const Eigen::MatrixXd& d_matrix,
                                                    const Eigen::VectorXd& y_b, const Eigen::VectorXd& e,
                                                    const Eigen::VectorXd& p_b, double rho) {
  valleyfill::qp::ChargingProblem p;
  p.n = static_cast<int>(p_bar.size());
  p.h = static_cast<int>(d_matrix.rows());
  p.K = static_cast<int>(p_b.size());
  p.p_bar = p_bar;
  p.d_matrix = d_matrix;
  p.y_b = y_b;
  p.e = e;
  p.p_b = p_b;
  p.rho = rho;
  p.ev_node.assign(static_cast<std::size_t>(p.n), 1);
  return p;
}

/// Random problem with n EVs, h nodes and K steps; D <= 0, e in [0.5, K-0.5].
inline valleyfill::qp::ChargingProblem random_problem(std::mt19937_64& rng, int n, int h, int K, double rho = 0.1) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd p_bar(n), e(n), p_b(K), y_b(static_cast<Eigen::Index>(h) * K);
  Eigen::MatrixXd d(h, n);
  for (int i = 0; i < n; ++i) {
    p_bar(i) = 1.0 + 2.0 * unit(rng);
    e(i) = 0.5 + (K - 1.0) * unit(rng);
  }
  for (int t = 0; t < K; ++t) p_b(t) = 2.0 + 3.0 * unit(rng);
  for (Eigen::Index j = 0; j < d.size(); ++j) d.data()[j] = -0.1 * unit(rng);
  for (Eigen::Index j = 0; j < y_b.size(); ++j) y_b(j) = -0.2 + 0.15 * unit(rng);
  return make_problem(p_bar, d, y_b, e, p_b, rho);
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index size, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd v(size);
  for (Eigen::Index j = 0; j < size; ++j) v(j) = dist(rng);
  return v;
}

/// Random radial tree with h nodes: each node hangs off an earlier one.
inline std::vector<valleyfill::grid::LineSegment> random_tree(std::mt19937_64& rng, int h) {
  std::uniform_real_distribution<double> imp(0.001, 0.02);
  std::vector<valleyfill::grid::LineSegment> lines;
  for (int node = 1; node <= h; ++node) {
    std::uniform_int_distribution<int> parent(0, node - 1);
    lines.push_back({parent(rng), node, imp(rng), imp(rng)});
  }
  return lines;
}

}  // namespace testing
