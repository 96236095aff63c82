#include <cmath>
#include <random>

#include "doctest.h"
#include "gridloop/netmodel.hpp"
#include "gridloop/plant.hpp"
#include "support.hpp"

using namespace gridloop;
using testing_support::error_code_of;
using testing_support::source_path;

namespace {

// Rectangular Newton-Raphson on the full bus admittance matrix.
Eigen::VectorXcd newton_raphson(const NetworkModel& net, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const int n = net.size();
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n + 1, n + 1);
  for (const Line& ln : net.lines()) {
    const Complex y = 1.0 / ln.z;
    Y(ln.from, ln.from) += y;
    Y(ln.to, ln.to) += y;
    Y(ln.from, ln.to) -= y;
    Y(ln.to, ln.from) -= y;
  }
  for (const Node& nd : net.nodes()) Y(nd.id, nd.id) += nd.shunt;

  Eigen::VectorXcd V = Eigen::VectorXcd::Constant(n + 1, Complex(net.v0(), 0.0));
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXcd I = Y * V;
    Eigen::VectorXd F(2 * n);
    for (int i = 1; i <= n; ++i) {
      const Complex s = V(i) * std::conj(I(i));
      F(i - 1) = s.real() - p(i - 1);
      F(n + i - 1) = s.imag() - q(i - 1);
    }
    if (F.cwiseAbs().maxCoeff() < 1e-13) break;
    Eigen::MatrixXd J(2 * n, 2 * n);
    for (int i = 1; i <= n; ++i) {
      for (int k = 1; k <= n; ++k) {
        const Complex diag = (i == k) ? std::conj(I(i)) : Complex(0, 0);
        const Complex d_e = diag + V(i) * std::conj(Y(i, k));
        const Complex d_f = Complex(0, 1) * diag - Complex(0, 1) * V(i) * std::conj(Y(i, k));
        J(i - 1, k - 1) = d_e.real();
        J(n + i - 1, k - 1) = d_e.imag();
        J(i - 1, n + k - 1) = d_f.real();
        J(n + i - 1, n + k - 1) = d_f.imag();
      }
    }
    const Eigen::VectorXd dx = J.partialPivLu().solve(-F);
    for (int k = 1; k <= n; ++k) V(k) += Complex(dx(k - 1), dx(n + k - 1));
  }
  return V.tail(n);
}

}  // namespace

TEST_CASE("zero injections give a flat profile") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(net.size());
  const PowerFlowSolution sol = solve_power_flow(net, z, z);
  CHECK(sol.converged);
  CHECK((sol.v_mag.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(sol.v_ang.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(sol.p_slack) < 1e-12);
}

TEST_CASE("two-bus voltage matches the closed-form branch equation") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  const PowerFlowSolution sol = solve_power_flow(net, net.nominal_p(), net.nominal_q());
  REQUIRE(sol.converged);
  // Receiving-end load P + jQ through r + jx:
  //   u^2 - (v0^2 - 2(rP + xQ)) u + (r^2 + x^2)(P^2 + Q^2) = 0,  u = |V1|^2.
  const double r = 0.01, x = 0.02, P = 0.1, Q = 0.05;
  const double b = 1.0 - 2.0 * (r * P + x * Q);
  const double c = (r * r + x * x) * (P * P + Q * Q);
  const double u = 0.5 * (b + std::sqrt(b * b - 4.0 * c));
  CHECK(sol.v_mag(0) == doctest::Approx(std::sqrt(u)).epsilon(1e-12));
  // Slack supplies the load plus the I^2 r loss.
  const double loss = r * (P * P + Q * Q) / u;
  CHECK(sol.p_slack == doctest::Approx(P + loss).epsilon(1e-10));
  CHECK(sol.q_slack == doctest::Approx(Q + loss * x / r).epsilon(1e-10));
}

TEST_CASE("sweep agrees with an independent Newton-Raphson solve") {
  const NetworkModel net = load_network(source_path("networks/ieee33_1mva.json"));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(0.0, 1.5);
  for (int trial = 0; trial <= 10; ++trial) {
    Eigen::VectorXd p = net.nominal_p(), q = net.nominal_q();
    if (trial > 0)
      for (int i = 0; i < net.size(); ++i) {
        p(i) *= scale(rng);
        q(i) *= scale(rng);
      }
    const PowerFlowSolution sol = solve_power_flow(net, p, q);
    REQUIRE(sol.converged);
    CHECK(sol.residual <= 1e-10);
    const Eigen::VectorXcd V = newton_raphson(net, p, q);
    CHECK((sol.v_mag - V.cwiseAbs()).cwiseAbs().maxCoeff() < 1e-8);
    Eigen::VectorXd ang(net.size());
    for (int i = 0; i < net.size(); ++i) ang(i) = std::arg(V(i));
    CHECK((sol.v_ang - ang).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("slack power equals load plus line losses") {
  const NetworkModel net = load_network(source_path("networks/ieee33_1mva.json"));
  const PowerFlowSolution sol = solve_power_flow(net, net.nominal_p(), net.nominal_q());
  REQUIRE(sol.converged);
  Eigen::VectorXcd V(net.size() + 1);
  V(0) = net.v0();
  for (int i = 0; i < net.size(); ++i) V(i + 1) = std::polar(sol.v_mag(i), sol.v_ang(i));
  Complex losses{0, 0};
  for (const Line& ln : net.lines()) {
    const Complex i_line = (V(ln.from) - V(ln.to)) / ln.z;
    losses += ln.z * std::norm(i_line);
  }
  CHECK(sol.p_slack == doctest::Approx(-net.nominal_p().sum() + losses.real()).epsilon(1e-9));
  CHECK(sol.q_slack == doctest::Approx(-net.nominal_q().sum() + losses.imag()).epsilon(1e-9));
  // Published base-case losses of this feeder are about 202.7 kW.
  CHECK(losses.real() == doctest::Approx(0.2027).epsilon(0.01));
}

TEST_CASE("heavier load lowers every voltage") {
  const NetworkModel net = load_network(source_path("networks/ieee33_1mva.json"));
  Eigen::VectorXd prev = Eigen::VectorXd::Ones(net.size());
  for (double s : {0.25, 0.5, 1.0, 1.5}) {
    const PowerFlowSolution sol = solve_power_flow(net, s * net.nominal_p(), s * net.nominal_q());
    REQUIRE(sol.converged);
    CHECK((sol.v_mag.array() < prev.array()).all());
    prev = sol.v_mag;
  }
}

TEST_CASE("collapse-level load reports non-convergence") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  Eigen::VectorXd p(1), q(1);
  p << -40.0;
  q << -20.0;
  PowerFlowOptions opt;
  opt.max_iter = 60;
  const PowerFlowSolution sol = solve_power_flow(net, p, q, opt);
  CHECK_FALSE(sol.converged);
  CHECK(sol.residual_history.size() == 60);
  CHECK(error_code_of([&] { true_quantities(sol); }) == ErrorCode::convergence);
}

TEST_CASE("dimension mismatch is rejected") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  CHECK(error_code_of([&] { solve_power_flow(net, z, z); }) == ErrorCode::dimension);
}
