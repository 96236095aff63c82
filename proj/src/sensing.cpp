#include "gridloop/sensing.hpp"

#include <algorithm>
#include <cmath>

#include "gridloop/error.hpp"
#include "gridloop/keyed_random.hpp"

namespace gridloop {

namespace {

double pseudo_std(const MeasurementPlan& plan, double base) {
  return plan.pseudo_sigma * std::max(std::abs(base), plan.pseudo_floor);
}

}  // namespace

const char* to_string(PseudoCenter c) { return c == PseudoCenter::nominal ? "nominal" : "truth"; }

PseudoCenter pseudo_center_from_string(const std::string& name) {
  if (name == "truth") return PseudoCenter::truth;
  if (name == "nominal") return PseudoCenter::nominal;
  throw Error(ErrorCode::invalid_argument, "unknown pseudo_center '" + name + "'");
}

void MeasurementPlan::validate(int n) const {
  if (size() != n || pseudo_base_q.size() != n)
    throw Error(ErrorCode::dimension, "measurement plan: pseudo base must have length " + std::to_string(n));
  if (!(sensor_sigma >= 0.0) || !(pseudo_sigma >= 0.0))
    throw Error(ErrorCode::invalid_argument, "measurement plan: sigmas must be >= 0");
  if (!(pseudo_floor > 0.0) || !(min_sigma > 0.0))
    throw Error(ErrorCode::invalid_argument, "measurement plan: pseudo_floor and min_sigma must be positive");
  if (!std::is_sorted(sensor_nodes.begin(), sensor_nodes.end()) ||
      std::adjacent_find(sensor_nodes.begin(), sensor_nodes.end()) != sensor_nodes.end())
    throw Error(ErrorCode::invalid_argument, "measurement plan: sensor nodes must be sorted and unique");
  for (int id : sensor_nodes)
    if (id < 1 || id > n)
      throw Error(ErrorCode::invalid_argument, "measurement plan: sensor at unknown node " + std::to_string(id));
}

Eigen::VectorXd MeasurementPlan::weight_sigma() const {
  const int n = size();
  const int m = static_cast<int>(sensor_nodes.size());
  Eigen::VectorXd s(m + 2 * n);
  for (int k = 0; k < m; ++k) s[k] = std::max(sensor_sigma * v_ref, min_sigma);
  for (int i = 0; i < n; ++i) {
    s[m + i] = std::max(pseudo_std(*this, pseudo_base_p[i]), min_sigma);
    s[m + n + i] = std::max(pseudo_std(*this, pseudo_base_q[i]), min_sigma);
  }
  return s;
}

std::vector<Channel> MeasurementPlan::channels() const {
  std::vector<Channel> out;
  out.reserve(channel_count());
  for (int id : sensor_nodes) out.push_back({ChannelKind::voltage, id});
  for (int id = 1; id <= size(); ++id) out.push_back({ChannelKind::p_injection, id});
  for (int id = 1; id <= size(); ++id) out.push_back({ChannelKind::q_injection, id});
  return out;
}

std::uint64_t channel_key(ChannelKind kind, int node) {
  return (static_cast<std::uint64_t>(kind) << 32) | static_cast<std::uint32_t>(node);
}

double channel_noise(std::uint64_t seed, std::uint64_t iter, ChannelKind kind, int node) {
  return standard_normal(mix_key(seed, iter, channel_key(kind, node)));
}

MeasurementBatch sample_measurements(const MeasurementPlan& plan, const Eigen::VectorXd& truth_v,
                                     const Eigen::VectorXd& truth_p, const Eigen::VectorXd& truth_q,
                                     std::uint64_t iter) {
  const int n = plan.size();
  if (truth_v.size() != n || truth_p.size() != n || truth_q.size() != n)
    throw Error(ErrorCode::dimension, "sample_measurements: truth vectors must have length " + std::to_string(n));
  const int m = static_cast<int>(plan.sensor_nodes.size());
  MeasurementBatch batch;
  batch.y.resize(m + 2 * n);
  batch.sigma.resize(m + 2 * n);
  batch.channel_map = plan.channels();

  for (int k = 0; k < m; ++k) {
    const int id = plan.sensor_nodes[k];
    const double v = truth_v[id - 1];
    const double std_abs = plan.sensor_sigma * std::abs(v);
    batch.y[k] = std_abs > 0.0 ? v + std_abs * channel_noise(plan.seed, iter, ChannelKind::voltage, id) : v;
    batch.sigma[k] = std::max(std_abs, plan.min_sigma);
  }
  const std::uint64_t pseudo_iter = plan.pseudo_redraw ? iter : 0;
  const bool at_truth = plan.pseudo_center == PseudoCenter::truth;
  for (int i = 0; i < n; ++i) {
    const int id = i + 1;
    const double sp = pseudo_std(plan, plan.pseudo_base_p[i]);
    const double sq = pseudo_std(plan, plan.pseudo_base_q[i]);
    const double mp = at_truth ? truth_p[i] : plan.pseudo_base_p[i];
    const double mq = at_truth ? truth_q[i] : plan.pseudo_base_q[i];
    batch.y[m + i] = sp > 0.0 ? mp + sp * channel_noise(plan.seed, pseudo_iter, ChannelKind::p_injection, id) : mp;
    batch.y[m + n + i] = sq > 0.0 ? mq + sq * channel_noise(plan.seed, pseudo_iter, ChannelKind::q_injection, id) : mq;
    batch.sigma[m + i] = std::max(sp, plan.min_sigma);
    batch.sigma[m + n + i] = std::max(sq, plan.min_sigma);
  }
  return batch;
}

LinearMeasurementModel build_linear_measurement_model(const MeasurementPlan& plan, const LinearFlowModel& model) {
  const int n = model.size();
  plan.validate(n);
  const int m = static_cast<int>(plan.sensor_nodes.size());
  LinearMeasurementModel out;
  out.H = Eigen::MatrixXd::Zero(m + 2 * n, 2 * n);
  for (int k = 0; k < m; ++k) {
    const int row = plan.sensor_nodes[k] - 1;
    out.H.block(k, 0, 1, n) = model.A.row(row);
    out.H.block(k, n, 1, n) = model.B.row(row);
  }
  out.H.bottomRows(2 * n).setIdentity();
  out.W = plan.weight_sigma().array().square().inverse().matrix();
  const Eigen::MatrixXd normal = out.H.transpose() * out.W.asDiagonal() * out.H;
  Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::observability, "measurement model is not fully observable (H^T W H is not positive definite)");
  return out;
}

std::vector<int> place_sensors(int n, double fraction, std::uint64_t placement_seed) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "place_sensors: n must be >= 1");
  if (!(fraction >= 0.0) || fraction > 1.0)
    throw Error(ErrorCode::invalid_argument, "sensor fraction must lie in [0, 1]");
  if (fraction == 0.0) return {};
  const int count = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i + 1;
  std::sort(ids.begin(), ids.end(), [placement_seed](int a, int b) {
    const auto ka = mix_key(placement_seed, static_cast<std::uint64_t>(a));
    const auto kb = mix_key(placement_seed, static_cast<std::uint64_t>(b));
    return ka != kb ? ka < kb : a < b;
  });
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace gridloop
