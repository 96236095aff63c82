#include <random>

#include "doctest.h"
#include "gridloop/controller.hpp"
#include "support.hpp"

using namespace gridloop;
using testing_support::error_code_of;
using testing_support::source_path;

namespace {

ControllerConfig config(double eps, double eta) {
  ControllerConfig c;
  c.eps_primal = c.eps_dual = eps;
  c.eta = eta;
  return c;
}

ControllerState random_state(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.05, 0.0), m(0.0, 2.0);
  ControllerState s;
  s.p.resize(n);
  s.q.resize(n);
  s.mu_lower.resize(n);
  s.mu_upper.resize(n);
  for (int i = 0; i < n; ++i) {
    s.p(i) = u(rng);
    s.q(i) = u(rng);
    s.mu_lower(i) = m(rng);
    s.mu_upper(i) = m(rng);
  }
  return s;
}

// Dense saddle operator Jacobian [[H, G^T], [-G, eta I]].
Eigen::MatrixXd dense_saddle_jacobian(const CostParams& cost, const LinearFlowModel& m, double eta) {
  const int n = m.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  H.diagonal() << 2.0 * cost.weight_p, 2.0 * cost.weight_q;
  H.topLeftCorner(n, n).array() += 2.0 * cost.alpha;
  Eigen::MatrixXd G(2 * n, 2 * n);
  G << -m.A, -m.B, m.A, m.B;
  Eigen::MatrixXd J(4 * n, 4 * n);
  J << H, G.transpose(), -G, eta * Eigen::MatrixXd::Identity(2 * n, 2 * n);
  return J;
}

}  // namespace

TEST_CASE("primal gradient on the two-bus example") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  const LinearFlowModel m = lindistflow(net);
  const CostParams cost = CostParams::from_network(net);
  ControllerState s = ControllerState::initial(net.nominal_p(), net.nominal_q());
  s.mu_lower(0) = 1.0;
  const PrimalGradient g = primal_grad(s, cost, m, config(0.01, 0.1));
  CHECK(g.g_p(0) == doctest::Approx(-0.01));
  CHECK(g.g_q(0) == doctest::Approx(-0.02));

  s.p(0) = -0.05;
  s.mu_lower(0) = 0.0;
  s.mu_upper(0) = 2.0;
  const PrimalGradient g2 = primal_grad(s, cost, m, config(0.01, 0.1));
  CHECK(g2.g_p(0) == doctest::Approx(2.0 * 0.05 + 0.02));
  CHECK(g2.g_q(0) == doctest::Approx(0.04));
}

TEST_CASE("primal gradient is the derivative of the Lagrangian") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const LinearFlowModel m = lindistflow(net);
  CostParams cost = CostParams::from_network(net, 0.5);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> w(0.5, 2.0);
  for (int i = 0; i < net.size(); ++i) {
    cost.weight_p(i) = w(rng);
    cost.weight_q(i) = w(rng);
  }
  const ControllerConfig cfg = config(1e-3, 0.3);
  const double h = 1e-6;
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const ControllerState s = random_state(net.size(), rng);
    const PrimalGradient g = primal_grad(s, cost, m, cfg);
    for (int i = 0; i < net.size(); ++i) {
      ControllerState a = s, b = s;
      a.p(i) += h;
      b.p(i) -= h;
      const double fd_p = (lagrangian(a, cost, m, cfg) - lagrangian(b, cost, m, cfg)) / (2 * h);
      a = s;
      b = s;
      a.q(i) += h;
      b.q(i) -= h;
      const double fd_q = (lagrangian(a, cost, m, cfg) - lagrangian(b, cost, m, cfg)) / (2 * h);
      worst = std::max({worst, std::abs(fd_p - g.g_p(i)), std::abs(fd_q - g.g_q(i))});
    }
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("dual step is the negative Lagrangian gradient, clipped at zero") {
  ControllerState s = ControllerState::initial(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2));
  s.mu_lower << 0.0, 0.5;
  s.mu_upper << 0.0, 0.5;
  Eigen::VectorXd r(2);
  r << 0.94, 1.0;
  const ControllerState n = dual_step(s, r, config(0.1, 0.1));
  CHECK(n.mu_lower(0) == doctest::Approx(0.1 * 0.01));
  CHECK(n.mu_lower(1) == doctest::Approx(0.5 + 0.1 * (-0.05 - 0.05)));
  CHECK(n.mu_upper(0) == 0.0);
  CHECK(n.mu_upper(1) == doctest::Approx(0.5 + 0.1 * (-0.05 - 0.05)));
  CHECK(n.p == s.p);
}

TEST_CASE("dual iteration with a fixed violation settles at violation over eta") {
  ControllerState s = ControllerState::initial(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1));
  Eigen::VectorXd r(1);
  r << 0.93;
  const ControllerConfig cfg = config(0.5, 0.2);
  for (int k = 0; k < 2000; ++k) s = dual_step(s, r, cfg);
  CHECK(s.mu_lower(0) == doctest::Approx(0.02 / 0.2).epsilon(1e-12));
  CHECK(s.mu_upper(0) == 0.0);
}

TEST_CASE("primal step projects onto the feasible box") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  const ControllerState s = ControllerState::initial(net.nominal_p(), net.nominal_q());
  PrimalGradient g{Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Constant(1, 1.0)};
  const ControllerState n = primal_step(s, g, net, config(0.01, 0.1));
  CHECK(n.p(0) == doctest::Approx(-0.05));
  CHECK(n.q(0) == doctest::Approx(-0.05));  // clamped at q_min
  g.g_p(0) = -100.0;
  CHECK(primal_step(s, g, net, config(0.01, 0.1)).p(0) == 0.0);
}

TEST_CASE("certificate of a decoupled operator") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  LinearFlowModel m = lindistflow(net);
  m.A.setZero();
  m.B.setZero();
  const StepSizeCertificate c = certify_step_size(CostParams::from_network(net), m, config(0.001, 0.01), net);
  CHECK(c.M == doctest::Approx(0.01));
  CHECK(c.L == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(c.eps_max == doctest::Approx(0.005).epsilon(1e-9));
  CHECK(c.certified());
  CHECK(c.delta == doctest::Approx(1e-6 * 4 - 2e-5 + 1));
  CHECK(contraction_factor(c.eps_max, c.M, c.L) == doctest::Approx(1.0));
}

TEST_CASE("power-iteration Lipschitz constant matches the SVD") {
  const NetworkModel net = load_network(source_path("networks/ieee33_1mva.json"));
  const LinearFlowModel m = lindistflow(net);
  for (double alpha : {0.0, 0.3}) {
    for (double eta : {1e-3, 0.1, 1.0}) {
      const CostParams cost = CostParams::from_network(net, alpha);
      const StepSizeCertificate c = certify_step_size(cost, m, config(1e-3, eta), net);
      const Eigen::MatrixXd J = dense_saddle_jacobian(cost, m, eta);
      const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(J).singularValues()(0);
      CHECK(c.L == doctest::Approx(sigma).epsilon(1e-8));
      CHECK(c.M == doctest::Approx(std::min(2.0, eta)));
      const double eps = 0.5 * c.eps_max;
      const double d = contraction_factor(eps, c.M, c.L);
      CHECK(d > 0.0);
      CHECK(d < 1.0);
    }
  }
}

TEST_CASE("step above the limit is not certified") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const StepSizeCertificate c =
      certify_step_size(CostParams::from_network(net), lindistflow(net), config(1e-3, 1e-3), net);
  CHECK_FALSE(c.certified());
  CHECK(c.eps_max < 1e-3);
  CHECK(contraction_factor(1e-3, c.M, c.L) > 1.0);
}

TEST_CASE("dual variables stay below the worst violation over eta") {
  const NetworkModel net = load_network(source_path("networks/ieee33_1mva.json"));
  const LinearFlowModel m = lindistflow(net);
  const CostParams cost = CostParams::from_network(net);
  const ControllerConfig cfg = config(0.01, 0.1);
  ControllerState s = ControllerState::initial(net.nominal_p(), net.nominal_q());
  double worst_violation = 0;
  for (int k = 0; k < 3000; ++k) {
    const Eigen::VectorXd r = eval_linear(m, s.p, s.q);
    worst_violation = std::max({worst_violation, (cfg.v_min - r.array()).maxCoeff(), (r.array() - cfg.v_max).maxCoeff()});
    const PrimalGradient g = primal_grad(s, cost, m, cfg);
    ControllerState next = primal_step(s, g, net, cfg);
    const ControllerState d = dual_step(s, r, cfg);
    next.mu_lower = d.mu_lower;
    next.mu_upper = d.mu_upper;
    s = next;
    CHECK(s.mu_lower.maxCoeff() <= worst_violation / cfg.eta + 1e-12);
    CHECK(s.mu_upper.maxCoeff() <= worst_violation / cfg.eta + 1e-12);
  }
  CHECK(s.mu_lower.maxCoeff() > 0.0);
}

TEST_CASE("configuration validation") {
  ControllerConfig c;
  CHECK_NOTHROW(c.validate());
  c.v_min = 1.1;
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::invalid_argument);
  c = ControllerConfig{};
  c.eps_primal = 0.0;
  CHECK(error_code_of([&] { c.validate(); }) == ErrorCode::invalid_argument);
}

TEST_CASE("stacked state round trip") {
  std::mt19937_64 rng(1);
  const ControllerState s = random_state(7, rng);
  const ControllerState b = ControllerState::from_stacked(s.stacked());
  CHECK(b.p == s.p);
  CHECK(b.mu_upper == s.mu_upper);
  CHECK(error_code_of([] { ControllerState::from_stacked(Eigen::VectorXd::Zero(5)); }) == ErrorCode::dimension);
}
