#include <cmath>

#include "doctest.h"
#include "gridloop/linearizer.hpp"
#include "gridloop/plant.hpp"
#include "gridloop/sensing.hpp"
#include "support.hpp"

using namespace gridloop;
using testing_support::error_code_of;
using testing_support::source_path;

namespace {

MeasurementPlan plan_for(const NetworkModel& net, std::vector<int> sensors) {
  MeasurementPlan plan;
  plan.sensor_nodes = std::move(sensors);
  plan.pseudo_base_p = net.nominal_p();
  plan.pseudo_base_q = net.nominal_q();
  plan.pseudo_floor = 1e-4;
  plan.seed = 42;
  return plan;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("zero noise reproduces the truth") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  MeasurementPlan plan = plan_for(net, {3, 9, 18});
  plan.sensor_sigma = 0.0;
  plan.pseudo_sigma = 0.0;
  const Eigen::VectorXd v = solve_power_flow(net, net.nominal_p(), net.nominal_q()).v_mag;
  const MeasurementBatch b = sample_measurements(plan, v, net.nominal_p(), net.nominal_q(), 7);
  CHECK(b.y(0) == v(2));
  CHECK(b.y(2) == v(17));
  CHECK(b.y.segment(3, 32) == net.nominal_p());
  CHECK(b.y.tail(32) == net.nominal_q());
  CHECK(b.sigma.minCoeff() == plan.min_sigma);
  CHECK(b.channel_map.size() == 67);
  CHECK(b.channel_map[0] == Channel{ChannelKind::voltage, 3});
  CHECK(b.channel_map[3] == Channel{ChannelKind::p_injection, 1});
}

TEST_CASE("draws are a pure function of seed, iteration and channel") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const MeasurementPlan plan = plan_for(net, {5});
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(32);
  const auto a = sample_measurements(plan, v, net.nominal_p(), net.nominal_q(), 3);
  const auto b = sample_measurements(plan, v, net.nominal_p(), net.nominal_q(), 3);
  const auto c = sample_measurements(plan, v, net.nominal_p(), net.nominal_q(), 4);
  CHECK(a.y == b.y);
  CHECK(a.y != c.y);

  // The sensor set does not change the noise seen on shared channels.
  const MeasurementPlan wider = plan_for(net, {1, 5, 20});
  const auto w = sample_measurements(wider, v, net.nominal_p(), net.nominal_q(), 3);
  CHECK(w.y(1) == a.y(0));
  CHECK(w.y.tail(64) == a.y.tail(64));

  MeasurementPlan frozen = plan;
  frozen.pseudo_redraw = false;
  const auto f3 = sample_measurements(frozen, v, net.nominal_p(), net.nominal_q(), 3);
  const auto f9 = sample_measurements(frozen, v, net.nominal_p(), net.nominal_q(), 9);
  CHECK(f3.y.tail(64) == f9.y.tail(64));
  CHECK(f3.y(0) != f9.y(0));
}

TEST_CASE("noise has zero mean and unit variance") {
  const int n = 100000;
  Eigen::VectorXd x(n);
  for (int k = 0; k < n; ++k) x(k) = channel_noise(9, static_cast<std::uint64_t>(k), ChannelKind::voltage, 4);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean) < 4.0 / std::sqrt(n));
  CHECK(std::abs(std::sqrt(var) - 1.0) < 0.01);
  // Tail mass beyond 2.576 sigma is 1 percent.
  const double tail = (x.array().abs() > 2.576).cast<double>().mean();
  CHECK(tail == doctest::Approx(0.01).epsilon(0.1));
}

TEST_CASE("channels are uncorrelated") {
  const int n = 10000;
  Eigen::VectorXd a(n), b(n), c(n), d(n);
  for (int k = 0; k < n; ++k) {
    a(k) = channel_noise(1, k, ChannelKind::voltage, 1);
    b(k) = channel_noise(1, k, ChannelKind::p_injection, 1);
    c(k) = channel_noise(1, k, ChannelKind::q_injection, 1);
    d(k) = channel_noise(1, k, ChannelKind::voltage, 2);
  }
  for (const auto* other : {&b, &c, &d}) CHECK(std::abs(correlation(a, *other)) <= 0.03);
  CHECK(std::abs(correlation(b, c)) <= 0.03);
  Eigen::VectorXd lag = a.tail(n - 1), lead = a.head(n - 1);
  CHECK(std::abs(correlation(lag, lead)) <= 0.03);
}

TEST_CASE("sensor noise scales with the true voltage") {
  const NetworkModel net = load_network(source_path("networks/two_bus.json"));
  MeasurementPlan plan = plan_for(net, {1});
  const int n = 20000;
  Eigen::VectorXd e(n);
  for (int k = 0; k < n; ++k) {
    const auto b = sample_measurements(plan, Eigen::VectorXd::Constant(1, 0.9), net.nominal_p(), net.nominal_q(), k);
    e(k) = b.y(0) - 0.9;
  }
  CHECK(std::sqrt(e.squaredNorm() / n) == doctest::Approx(0.009).epsilon(0.03));
}

TEST_CASE("measurement matrix stacks sensor rows over the identity") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const LinearFlowModel m = lindistflow(net);
  const MeasurementPlan plan = plan_for(net, {4, 17});
  const LinearMeasurementModel lm = build_linear_measurement_model(plan, m);
  CHECK(lm.H.rows() == 66);
  CHECK(lm.H.cols() == 64);
  CHECK(lm.H.block(0, 0, 1, 32) == m.A.row(3));
  CHECK(lm.H.block(1, 32, 1, 32) == m.B.row(16));
  CHECK(lm.H.bottomRows(64) == Eigen::MatrixXd::Identity(64, 64));
  CHECK(lm.W(0) == doctest::Approx(1e4));
  const Eigen::MatrixXd normal = lm.H.transpose() * lm.W.asDiagonal() * lm.H;
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(normal).singularValues();
  CHECK(sv(0) / sv(sv.size() - 1) < 1e12);
}

TEST_CASE("plan validation") {
  const NetworkModel net = load_network(source_path("networks/ieee33.json"));
  const LinearFlowModel m = lindistflow(net);
  CHECK(error_code_of([&] { build_linear_measurement_model(plan_for(net, {40}), m); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { build_linear_measurement_model(plan_for(net, {5, 2}), m); }) ==
        ErrorCode::invalid_argument);
  MeasurementPlan short_base = plan_for(net, {1});
  short_base.pseudo_base_p.resize(3);
  CHECK(error_code_of([&] { build_linear_measurement_model(short_base, m); }) == ErrorCode::dimension);
}

TEST_CASE("sensor placement by fraction") {
  const auto a = place_sensors(33, 0.1, 1);
  CHECK(a.size() == 3);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(a == place_sensors(33, 0.1, 1));
  CHECK(place_sensors(33, 1.0, 1).size() == 33);
  CHECK(place_sensors(33, 0.0, 1).empty());
  CHECK(place_sensors(33, 0.001, 1).size() == 1);
  CHECK(error_code_of([] { place_sensors(33, 1.5, 1); }) == ErrorCode::invalid_argument);
}
