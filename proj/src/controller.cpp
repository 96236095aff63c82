#include "gridloop/controller.hpp"

#include <cmath>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

void check_sizes(const ControllerState& s, const CostParams& cost, const LinearFlowModel& model) {
  const int n = model.size();
  if (s.p.size() != n || s.q.size() != n || s.mu_lower.size() != n || s.mu_upper.size() != n || cost.size() != n ||
      cost.weight_p.size() != n || cost.weight_q.size() != n || cost.q_nominal.size() != n)
    throw Error(ErrorCode::dimension, "controller: state, cost and model sizes disagree");
}

// The saddle operator's Jacobian [[H, G^T], [-G, eta I]] and its transpose,
// applied without forming the 4N x 4N matrix. G = [-A -B; A B].
struct SaddleJacobian {
  const CostParams& cost;
  const LinearFlowModel& model;
  double eta;

  int n() const { return model.size(); }

  Eigen::VectorXd hessian_part(const Eigen::VectorXd& x) const {
    const int n = this->n();
    Eigen::VectorXd out(2 * n);
    out.head(n) = 2.0 * cost.weight_p.cwiseProduct(x.head(n)) +
                  Eigen::VectorXd::Constant(n, 2.0 * cost.alpha * x.head(n).sum());
    out.tail(n) = 2.0 * cost.weight_q.cwiseProduct(x.tail(n));
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v, bool transpose) const {
    const int n = this->n();
    const double sign = transpose ? -1.0 : 1.0;
    const Eigen::VectorXd x = v.head(2 * n);
    const Eigen::VectorXd ml = v.segment(2 * n, n);
    const Eigen::VectorXd mu = v.tail(n);
    const Eigen::VectorXd dmu = mu - ml;
    const Eigen::VectorXd gx = model.A * x.head(n) + model.B * x.tail(n);
    Eigen::VectorXd out(4 * n);
    out.head(2 * n) = hessian_part(x);
    out.head(n) += sign * (model.A.transpose() * dmu);
    out.segment(n, n) += sign * (model.B.transpose() * dmu);
    out.segment(2 * n, n) = sign * gx + eta * ml;
    out.tail(n) = -sign * gx + eta * mu;
    return out;
  }
};

double spectral_norm(const SaddleJacobian& jac) {
  const int dim = 4 * jac.n();
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + i);
  v.normalize();
  double sigma2 = 0.0;
  for (int iter = 0; iter < 100000; ++iter) {
    const Eigen::VectorXd jv = jac.apply(v, false);
    Eigen::VectorXd w = jac.apply(jv, true);
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (iter > 10 && std::abs(next - sigma2) <= 1e-14 * next) {
      sigma2 = next;
      break;
    }
    sigma2 = next;
  }
  return std::sqrt(sigma2);
}

}  // namespace

CostParams CostParams::from_network(const NetworkModel& net, double alpha) {
  CostParams c;
  const int n = net.size();
  c.weight_p = Eigen::VectorXd::Ones(n);
  c.weight_q = Eigen::VectorXd::Ones(n);
  c.p_nominal = net.nominal_p();
  c.q_nominal = net.nominal_q();
  c.alpha = alpha;
  c.p0_offset = 0.0;
  c.p0_target = c.p0_lossless(c.p_nominal);
  return c;
}

double CostParams::local(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
  return weight_p.dot((p - p_nominal).cwiseAbs2()) + weight_q.dot((q - q_nominal).cwiseAbs2());
}

ControllerState ControllerState::initial(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return {p, q, Eigen::VectorXd::Zero(p.size()), Eigen::VectorXd::Zero(p.size())};
}

Eigen::VectorXd ControllerState::stacked() const {
  const int n = size();
  Eigen::VectorXd x(4 * n);
  x << p, q, mu_lower, mu_upper;
  return x;
}

ControllerState ControllerState::from_stacked(const Eigen::VectorXd& x) {
  if (x.size() % 4 != 0) throw Error(ErrorCode::dimension, "stacked state length must be a multiple of 4");
  const Eigen::Index n = x.size() / 4;
  return {x.head(n), x.segment(n, n), x.segment(2 * n, n), x.tail(n)};
}

void ControllerConfig::validate() const {
  if (!(eps_primal > 0.0) || !(eps_dual > 0.0))
    throw Error(ErrorCode::invalid_argument, "controller step sizes must be positive");
  if (!(eta > 0.0)) throw Error(ErrorCode::invalid_argument, "controller.eta must be positive");
  if (!(v_min > 0.0) || !(v_min < v_max))
    throw Error(ErrorCode::invalid_argument, "controller voltage bounds need 0 < v_min < v_max");
}

PrimalGradient primal_grad(const ControllerState& state, const CostParams& cost, const LinearFlowModel& model,
                           const ControllerConfig&) {
  check_sizes(state, cost, model);
  const Eigen::VectorXd dmu = state.mu_upper - state.mu_lower;
  const double substation = -2.0 * cost.alpha * (cost.p0_lossless(state.p) - cost.p0_target);
  PrimalGradient g;
  g.g_p = 2.0 * cost.weight_p.cwiseProduct(state.p - cost.p_nominal) +
          Eigen::VectorXd::Constant(state.size(), substation) + model.A.transpose() * dmu;
  g.g_q = 2.0 * cost.weight_q.cwiseProduct(state.q - cost.q_nominal) + model.B.transpose() * dmu;
  return g;
}

ControllerState primal_step(const ControllerState& state, const PrimalGradient& grads, const NetworkModel& net,
                            const ControllerConfig& config) {
  const int n = state.size();
  if (net.size() != n || grads.g_p.size() != n || grads.g_q.size() != n)
    throw Error(ErrorCode::dimension, "primal_step: sizes disagree");
  ControllerState next = state;
  for (int i = 0; i < n; ++i) {
    const auto [p, q] = project_feasible(state.p[i] - config.eps_primal * grads.g_p[i],
                                         state.q[i] - config.eps_primal * grads.g_q[i], net.feasible()[i]);
    next.p[i] = p;
    next.q[i] = q;
  }
  return next;
}

ControllerState dual_step(const ControllerState& state, const Eigen::VectorXd& r_hat, const ControllerConfig& config) {
  if (r_hat.size() != state.size()) throw Error(ErrorCode::dimension, "dual_step: r_hat has the wrong length");
  ControllerState next = state;
  const double e = config.eps_dual;
  next.mu_lower = (state.mu_lower.array() + e * ((config.v_min - r_hat.array()) - config.eta * state.mu_lower.array()))
                      .max(0.0)
                      .matrix();
  next.mu_upper = (state.mu_upper.array() + e * ((r_hat.array() - config.v_max) - config.eta * state.mu_upper.array()))
                      .max(0.0)
                      .matrix();
  return next;
}

double lagrangian(const ControllerState& state, const CostParams& cost, const LinearFlowModel& model,
                  const ControllerConfig& config) {
  check_sizes(state, cost, model);
  const Eigen::VectorXd r = eval_linear(model, state.p, state.q);
  const double c0 = cost.substation(cost.p0_lossless(state.p));
  return cost.local(state.p, state.q) + c0 + state.mu_lower.dot((Eigen::VectorXd::Constant(r.size(), config.v_min) - r)) +
         state.mu_upper.dot(r - Eigen::VectorXd::Constant(r.size(), config.v_max)) -
         0.5 * config.eta * (state.mu_lower.squaredNorm() + state.mu_upper.squaredNorm());
}

double contraction_factor(double eps, double M, double L) { return eps * eps * L * L - 2.0 * eps * M + 1.0; }

StepSizeCertificate certify_step_size(const CostParams& cost, const LinearFlowModel& model,
                                      const ControllerConfig& config, const NetworkModel& net) {
  if (net.size() != model.size() || cost.size() != model.size())
    throw Error(ErrorCode::dimension, "certify_step_size: network, cost and model sizes disagree");
  if (!(config.eta > 0.0)) throw Error(ErrorCode::certificate, "certificate needs eta > 0");
  StepSizeCertificate cert;
  cert.M = std::min({2.0 * cost.weight_p.minCoeff(), 2.0 * cost.weight_q.minCoeff(), config.eta});
  if (!(cert.M > 0.0))
    throw Error(ErrorCode::certificate, "cost is not strongly convex (M = " + std::to_string(cert.M) + ")");
  cert.L = spectral_norm(SaddleJacobian{cost, model, config.eta});
  cert.eps_max = 2.0 * cert.M / (cert.L * cert.L);
  cert.eps = config.eps();
  cert.delta = contraction_factor(cert.eps, cert.M, cert.L);
  return cert;
}

}  // namespace gridloop
