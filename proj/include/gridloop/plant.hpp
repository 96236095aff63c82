#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridloop/netmodel.hpp"

namespace gridloop {

struct PowerFlowSolution {
  Eigen::VectorXd v_mag;  // nodes 1..N
  Eigen::VectorXd v_ang;  // radians
  double p_slack = 0.0;
  double q_slack = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // max complex power mismatch over non-slack nodes
  std::vector<double> residual_history;
};

struct PowerFlowOptions {
  double tol = 1e-10;
  int max_iter = 500;
};

// Backward/forward sweep from a flat start. Never throws on divergence; check
// `converged` and `residual_history` instead.
PowerFlowSolution solve_power_flow(const NetworkModel& net, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, const PowerFlowOptions& options = {});

// Voltage magnitudes of a converged solution. Throws on a non-converged one.
Eigen::VectorXd true_quantities(const PowerFlowSolution& sol);

}  // namespace gridloop
