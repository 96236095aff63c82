#include "gridloop/estimator.hpp"

#include "gridloop/error.hpp"
#include "gridloop/plant.hpp"

namespace gridloop {

namespace {

Eigen::LDLT<Eigen::MatrixXd> factor_normal(const Eigen::MatrixXd& H, const Eigen::VectorXd& w) {
  if (w.size() != H.rows()) throw Error(ErrorCode::dimension, "WLS: weight vector length must match H rows");
  if ((w.array() <= 0.0).any()) throw Error(ErrorCode::invalid_argument, "WLS: weights must be positive");
  const Eigen::MatrixXd normal = H.transpose() * w.asDiagonal() * H;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  const auto d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || (d.array() <= 1e-14 * d.cwiseAbs().maxCoeff()).any())
    throw Error(ErrorCode::observability, "WLS: H^T W H is singular; the plan is not fully observable");
  return ldlt;
}

}  // namespace

Eigen::VectorXd wls_solve(const Eigen::MatrixXd& H, const Eigen::VectorXd& w, const Eigen::VectorXd& y) {
  if (y.size() != H.rows()) throw Error(ErrorCode::dimension, "WLS: y length must match H rows");
  return factor_normal(H, w).solve(H.transpose() * w.cwiseProduct(y));
}

Eigen::MatrixXd wls_gamma(const Eigen::MatrixXd& H, const Eigen::VectorXd& w) {
  return factor_normal(H, w).solve(H.transpose() * w.asDiagonal());
}

Eigen::VectorXd gamma_variance(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& sigma) {
  if (sigma.size() != gamma.cols()) throw Error(ErrorCode::dimension, "gamma_variance: sigma length mismatch");
  return gamma.cwiseAbs2() * sigma.cwiseAbs2();
}

Eigen::VectorXd covariance_diagonal(const Eigen::MatrixXd& H, const Eigen::VectorXd& w) {
  const auto ldlt = factor_normal(H, w);
  return ldlt.solve(Eigen::MatrixXd::Identity(H.cols(), H.cols())).diagonal();
}

const char* to_string(VoltageMode mode) { return mode == VoltageMode::linear ? "linear" : "nonlinear"; }

VoltageMode voltage_mode_from_string(const std::string& name) {
  if (name == "nonlinear") return VoltageMode::nonlinear;
  if (name == "linear") return VoltageMode::linear;
  throw Error(ErrorCode::invalid_argument, "unknown voltage mode '" + name + "'");
}

Eigen::VectorXd estimate_voltages(const Eigen::VectorXd& z_hat, const NetworkModel& net, const LinearFlowModel& model,
                                  VoltageMode mode, bool* fell_back) {
  const int n = net.size();
  if (z_hat.size() != 2 * n) throw Error(ErrorCode::dimension, "estimate_voltages: z_hat must have length 2N");
  if (!z_hat.allFinite()) throw Error(ErrorCode::invalid_argument, "estimate_voltages: z_hat is not finite");
  if (fell_back) *fell_back = false;
  if (mode == VoltageMode::nonlinear) {
    const auto sol = solve_power_flow(net, z_hat.head(n), z_hat.tail(n));
    if (sol.converged) return sol.v_mag;
    if (fell_back) *fell_back = true;
  }
  return eval_linear(model, z_hat.head(n), z_hat.tail(n));
}

ConfidenceInterval confidence_interval(const EstimationResult& result, double c) {
  const Eigen::VectorXd hw = result.ci_halfwidth(c);
  return {result.z_hat - hw, result.z_hat + hw};
}

EstimationResult estimate_state(const LinearMeasurementModel& lm, const MeasurementBatch& batch,
                                const Eigen::VectorXd& y_adjusted, const NetworkModel& net,
                                const LinearFlowModel& model, VoltageMode mode) {
  EstimationResult out;
  out.gamma = wls_gamma(lm.H, lm.W);
  out.z_hat = out.gamma * y_adjusted;
  out.var = gamma_variance(out.gamma, batch.sigma);
  out.r_hat = estimate_voltages(out.z_hat, net, model, mode, &out.linear_fallback);
  return out;
}

WlsEstimator::WlsEstimator(const MeasurementPlan& plan, const LinearFlowModel& model) {
  const int n = model.size();
  plan.validate(n);
  const int m = static_cast<int>(plan.sensor_nodes.size());
  U_.resize(m, 2 * n);
  for (int k = 0; k < m; ++k) {
    U_.block(k, 0, 1, n) = model.A.row(plan.sensor_nodes[k] - 1);
    U_.block(k, n, 1, n) = model.B.row(plan.sensor_nodes[k] - 1);
  }
  const Eigen::VectorXd w = plan.weight_sigma().array().square().inverse().matrix();
  w_sensor_ = w.head(m);
  w_state_ = w.tail(2 * n);
  // K = Ws^-1 + U D^-1 U^T
  const Eigen::MatrixXd UDinv = U_ * w_state_.cwiseInverse().asDiagonal();
  Eigen::MatrixXd K = UDinv * U_.transpose();
  K.diagonal() += w_sensor_.cwiseInverse();
  capacitance_.compute(K);
  if (capacitance_.info() != Eigen::Success)
    throw Error(ErrorCode::observability, "WLS: capacitance matrix is not positive definite");
}

Eigen::VectorXd WlsEstimator::solve(const Eigen::VectorXd& y_sensor, const Eigen::VectorXd& y_state) const {
  if (y_sensor.size() != sensor_count() || y_state.size() != state_size())
    throw Error(ErrorCode::dimension, "WlsEstimator::solve: measurement length mismatch");
  const Eigen::VectorXd b = U_.transpose() * w_sensor_.cwiseProduct(y_sensor) + w_state_.cwiseProduct(y_state);
  const Eigen::VectorXd db = b.cwiseQuotient(w_state_);
  if (sensor_count() == 0) return db;
  const Eigen::VectorXd t = capacitance_.solve(U_ * db);
  return db - (U_.transpose() * t).cwiseQuotient(w_state_);
}

Eigen::VectorXd WlsEstimator::solve(const Eigen::VectorXd& y_adjusted) const {
  if (y_adjusted.size() != sensor_count() + state_size())
    throw Error(ErrorCode::dimension, "WlsEstimator::solve: measurement length mismatch");
  return solve(y_adjusted.head(sensor_count()), y_adjusted.tail(state_size()));
}

Eigen::VectorXd WlsEstimator::state_variance() const {
  const Eigen::VectorXd dinv = w_state_.cwiseInverse();
  if (sensor_count() == 0) return dinv;
  const Eigen::MatrixXd C = capacitance_.matrixL().solve(U_ * dinv.asDiagonal());
  return dinv - C.colwise().squaredNorm().transpose();
}

Eigen::VectorXd WlsEstimator::voltage_variance(const LinearFlowModel& model) const {
  const int n = model.size();
  if (2 * n != state_size()) throw Error(ErrorCode::dimension, "voltage_variance: model size mismatch");
  Eigen::MatrixXd V(n, 2 * n);
  V << model.A, model.B;
  const Eigen::VectorXd dinv = w_state_.cwiseInverse();
  Eigen::VectorXd var = V.cwiseAbs2() * dinv;
  if (sensor_count() > 0) {
    const Eigen::MatrixXd C = capacitance_.matrixL().solve(U_ * dinv.asDiagonal()) * V.transpose();
    var -= C.colwise().squaredNorm().transpose();
  }
  return var;
}

}  // namespace gridloop
