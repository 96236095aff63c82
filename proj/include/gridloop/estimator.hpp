#pragma once

#include <string>

#include <Eigen/Dense>

#include "gridloop/linearizer.hpp"
#include "gridloop/netmodel.hpp"
#include "gridloop/sensing.hpp"

namespace gridloop {

// Closed-form WLS, z = (H^T W H)^-1 H^T W y, with W = diag(w).
Eigen::VectorXd wls_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& w, const Eigen::VectorXd& y);

// Gamma = (H^T W H)^-1 H^T W.
Eigen::MatrixXd wls_gamma(const Eigen::MatrixXd& H, const Eigen::VectorXd& w);

// Var[z_j] = sum_i Gamma_ji^2 sigma_i^2. Valid for any weights.
Eigen::VectorXd gamma_variance(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& sigma);

// diag((H^T W H)^-1). Equal to gamma_variance when w = sigma^-2.
Eigen::VectorXd covariance_diagonal(const Eigen::MatrixXd& H, const Eigen::VectorXd& w);

enum class VoltageMode { nonlinear, linear };
const char* to_string(VoltageMode mode);
VoltageMode voltage_mode_from_string(const std::string& name);

// Voltages implied by estimated injections. In nonlinear mode a diverging
// power flow falls back to the linear model and sets *fell_back.
Eigen::VectorXd estimate_voltages(const Eigen::VectorXd& z_hat, const NetworkModel& net, const LinearFlowModel& model,
                                  VoltageMode mode, bool* fell_back = nullptr);

struct EstimationResult {
  Eigen::VectorXd z_hat;
  Eigen::VectorXd r_hat;
  Eigen::MatrixXd gamma;  // may be empty when only the cached path was used
  Eigen::VectorXd var;
  bool linear_fallback = false;

  Eigen::VectorXd ci_halfwidth(double c) const { return c * var.cwiseMax(0.0).cwiseSqrt(); }
};

struct ConfidenceInterval {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

ConfidenceInterval confidence_interval(const EstimationResult& result, double c);

// Full dense estimate: Gamma, Gamma-based variance and voltages.
EstimationResult estimate_state(const LinearMeasurementModel& lm, const MeasurementBatch& batch,
                                const Eigen::VectorXd& y_adjusted, const NetworkModel& net,
                                const LinearFlowModel& model, VoltageMode mode);

// WLS for the structured plan H = [U; I] with U the sensor rows of [A B].
// The normal matrix D + U^T Ws U is never formed; solves go through the
// |S| x |S| capacitance matrix, factored once at construction.
class WlsEstimator {
 public:
  WlsEstimator(const MeasurementPlan& plan, const LinearFlowModel& model);

  int state_size() const { return static_cast<int>(w_state_.size()); }
  int sensor_count() const { return static_cast<int>(w_sensor_.size()); }
  const Eigen::MatrixXd& sensor_rows() const { return U_; }

  // y_sensor already has the intercept removed.
  Eigen::VectorXd solve(const Eigen::VectorXd& y_sensor, const Eigen::VectorXd& y_state) const;
  Eigen::VectorXd solve(const Eigen::VectorXd& y_adjusted) const;

  // diag((H^T W H)^-1).
  Eigen::VectorXd state_variance() const;
  // diag([A B] (H^T W H)^-1 [A B]^T): variance of linearly reconstructed voltages.
  Eigen::VectorXd voltage_variance(const LinearFlowModel& model) const;

 private:
  Eigen::MatrixXd U_;
  Eigen::VectorXd w_sensor_;
  Eigen::VectorXd w_state_;
  Eigen::LLT<Eigen::MatrixXd> capacitance_;
};

}  // namespace gridloop
