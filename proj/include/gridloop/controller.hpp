#pragma once

#include <algorithm>

#include <Eigen/Dense>

#include "gridloop/linearizer.hpp"
#include "gridloop/netmodel.hpp"

namespace gridloop {

// Local cost sum_i w_p,i (p_i - p_i0)^2 + w_q,i (q_i - q_i0)^2 plus the
// substation term alpha (P0 - P0_target)^2. For gradients P0 is the lossless
// aggregate p0_offset - sum(p).
struct CostParams {
  Eigen::VectorXd weight_p;
  Eigen::VectorXd weight_q;
  Eigen::VectorXd p_nominal;
  Eigen::VectorXd q_nominal;
  double alpha = 0.0;
  double p0_target = 0.0;
  double p0_offset = 0.0;

  // Unit weights around the network's nominal injections; the target is the
  // lossless substation import at nominal.
  static CostParams from_network(const NetworkModel& net, double alpha = 0.0);

  int size() const { return static_cast<int>(p_nominal.size()); }
  double local(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;
  double substation(double p0) const { return alpha * (p0 - p0_target) * (p0 - p0_target); }
  double p0_lossless(const Eigen::VectorXd& p) const { return p0_offset - p.sum(); }
};

struct ControllerState {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  Eigen::VectorXd mu_lower;
  Eigen::VectorXd mu_upper;

  static ControllerState initial(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
  // Stacked (p, q, mu_lower, mu_upper).
  Eigen::VectorXd stacked() const;
  static ControllerState from_stacked(const Eigen::VectorXd& x);
  int size() const { return static_cast<int>(p.size()); }
};

struct ControllerConfig {
  double eps_primal = 7e-4;
  double eps_dual = 1e-3;
  double eta = 1e-3;
  double v_min = 0.95;
  double v_max = 1.05;

  double eps() const { return std::max(eps_primal, eps_dual); }
  void validate() const;
  bool operator==(const ControllerConfig&) const = default;
};

struct StepSizeCertificate {
  double M = 0.0;
  double L = 0.0;
  double eps_max = 0.0;
  double eps = 0.0;
  double delta = 0.0;
  bool certified() const { return eps > 0.0 && eps < eps_max; }
};

struct PrimalGradient {
  Eigen::VectorXd g_p;
  Eigen::VectorXd g_q;
};

PrimalGradient primal_grad(const ControllerState& state, const CostParams& cost, const LinearFlowModel& model,
                           const ControllerConfig& config);
ControllerState primal_step(const ControllerState& state, const PrimalGradient& grads, const NetworkModel& net,
                            const ControllerConfig& config);
ControllerState dual_step(const ControllerState& state, const Eigen::VectorXd& r_hat, const ControllerConfig& config);

// Regularized Lagrangian evaluated with the linear model.
double lagrangian(const ControllerState& state, const CostParams& cost, const LinearFlowModel& model,
                  const ControllerConfig& config);

// Strong monotonicity and Lipschitz constants of the saddle operator.
// L comes from power iteration on the operator Jacobian.
StepSizeCertificate certify_step_size(const CostParams& cost, const LinearFlowModel& model,
                                      const ControllerConfig& config, const NetworkModel& net);

double contraction_factor(double eps, double M, double L);

}  // namespace gridloop
