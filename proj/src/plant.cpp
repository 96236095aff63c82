#include "gridloop/plant.hpp"

#include <cmath>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

// max_i |V_i conj(I_i) - s_i| where I_i is the current leaving node i
// through its lines and shunt. Also returns the slack injection.
double power_mismatch(const NetworkModel& net, const std::vector<Complex>& v, const std::vector<Complex>& s,
                      Complex& slack) {
  const int n = net.size();
  std::vector<Complex> out(n + 1, Complex{});
  for (int id = 1; id <= n; ++id) out[id] = net.node(id).shunt * v[id];
  for (const Line& ln : net.lines()) {
    const Complex i_line = ln.admittance() * (v[ln.from] - v[ln.to]);
    out[ln.from] += i_line;
    out[ln.to] -= i_line;
  }
  double worst = 0.0;
  for (int id = 1; id <= n; ++id) worst = std::max(worst, std::abs(v[id] * std::conj(out[id]) - s[id]));
  slack = v[0] * std::conj(out[0]);
  return worst;
}

}  // namespace

PowerFlowSolution solve_power_flow(const NetworkModel& net, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                   const PowerFlowOptions& options) {
  const int n = net.size();
  if (p.size() != n || q.size() != n)
    throw Error(ErrorCode::dimension, "power flow: injection vectors must have length " + std::to_string(n));
  if (!(options.tol > 0.0) || options.max_iter < 1)
    throw Error(ErrorCode::invalid_argument, "power flow: tol must be positive and max_iter >= 1");

  std::vector<Complex> s(n + 1, Complex{});
  for (int id = 1; id <= n; ++id) s[id] = Complex(p[id - 1], q[id - 1]);
  std::vector<Complex> v(n + 1, Complex(net.v0(), 0.0));
  std::vector<Complex> branch(n + 1);
  const auto& order = net.sweep_order();

  PowerFlowSolution sol;
  Complex slack;
  double residual = power_mismatch(net, v, s, slack);
  int iter = 0;
  while (residual > options.tol && iter < options.max_iter) {
    ++iter;
    // Backward: current drawn through each feeder line.
    for (int id = 1; id <= n; ++id)
      branch[id] = -(std::conj(s[id] / v[id]) - net.node(id).shunt * v[id]);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int parent = net.parent(*it);
      if (parent != 0) branch[parent] += branch[*it];
    }
    // Forward: voltage drops from the substation outward.
    for (int id : order) v[id] = v[net.parent(id)] - net.feeder(id).z * branch[id];
    residual = power_mismatch(net, v, s, slack);
    sol.residual_history.push_back(residual);
    if (!std::isfinite(residual)) break;
  }

  sol.converged = residual <= options.tol;
  sol.iterations = iter;
  sol.residual = residual;
  sol.v_mag.resize(n);
  sol.v_ang.resize(n);
  for (int id = 1; id <= n; ++id) {
    sol.v_mag[id - 1] = std::abs(v[id]);
    sol.v_ang[id - 1] = std::arg(v[id]);
  }
  sol.p_slack = slack.real();
  sol.q_slack = slack.imag();
  return sol;
}

Eigen::VectorXd true_quantities(const PowerFlowSolution& sol) {
  if (!sol.converged)
    throw Error(ErrorCode::convergence, "power flow did not converge (residual " + std::to_string(sol.residual) +
                                            " after " + std::to_string(sol.iterations) + " iterations)");
  return sol.v_mag;
}

}  // namespace gridloop
