#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridloop/linearizer.hpp"

namespace gridloop {

enum class ChannelKind { voltage = 0, p_injection = 1, q_injection = 2 };

struct Channel {
  ChannelKind kind = ChannelKind::voltage;
  int node = 0;
  bool operator==(const Channel&) const = default;
};

enum class PseudoCenter { truth, nominal };

struct MeasurementPlan {
  std::vector<int> sensor_nodes;   // sorted node ids carrying a |v| sensor
  double sensor_sigma = 0.01;      // relative to the true voltage
  double pseudo_sigma = 0.5;       // relative to max(|pseudo_base|, pseudo_floor)
  double pseudo_floor = 0.01;
  double min_sigma = 1e-9;         // lower clamp on every channel's weight sigma
  Eigen::VectorXd pseudo_base_p;
  Eigen::VectorXd pseudo_base_q;
  std::uint64_t seed = 0;
  bool pseudo_redraw = true;       // false: one pseudo draw for the whole run
  PseudoCenter pseudo_center = PseudoCenter::truth;
  double v_ref = 1.0;              // voltage used for the fixed sensor weights

  int size() const { return static_cast<int>(pseudo_base_p.size()); }
  int channel_count() const { return static_cast<int>(sensor_nodes.size()) + 2 * size(); }
  void validate(int n) const;

  // Absolute standard deviations used for the weight matrix. Fixed per plan.
  Eigen::VectorXd weight_sigma() const;
  std::vector<Channel> channels() const;
};

struct MeasurementBatch {
  Eigen::VectorXd y;      // [sensor |v|; pseudo p; pseudo q]
  Eigen::VectorXd sigma;  // absolute noise std actually applied, clamped at min_sigma
  std::vector<Channel> channel_map;
};

// Stream key of one channel. Independent of which other sensors exist, so
// different plans with a shared seed see identical noise on shared channels.
std::uint64_t channel_key(ChannelKind kind, int node);

// Standard normal draw for (seed, iteration, channel).
double channel_noise(std::uint64_t seed, std::uint64_t iter, ChannelKind kind, int node);

MeasurementBatch sample_measurements(const MeasurementPlan& plan, const Eigen::VectorXd& truth_v,
                                     const Eigen::VectorXd& truth_p, const Eigen::VectorXd& truth_q,
                                     std::uint64_t iter);

struct LinearMeasurementModel {
  Eigen::MatrixXd H;  // (|S| + 2N) x 2N
  Eigen::VectorXd W;  // diagonal of the weight matrix
};

// Dense H and W. Throws when H^T W H is singular.
LinearMeasurementModel build_linear_measurement_model(const MeasurementPlan& plan, const LinearFlowModel& model);

// round(fraction * n) nodes, at least one, ordered by a keyed hash.
std::vector<int> place_sensors(int n, double fraction, std::uint64_t placement_seed);

const char* to_string(PseudoCenter c);
PseudoCenter pseudo_center_from_string(const std::string& name);

}  // namespace gridloop
