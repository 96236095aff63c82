#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "json.hpp"

namespace gridloop {

using Complex = std::complex<double>;

// Non-slack node. Injections are per-unit with loads negative.
struct Node {
  int id = 0;
  double p0 = 0.0;
  double q0 = 0.0;
  Complex shunt{0.0, 0.0};  // admittance to ground

  bool operator==(const Node&) const = default;
};

struct Line {
  int from = 0;  // parent side (toward the substation)
  int to = 0;
  Complex z{0.0, 0.0};

  Complex admittance() const { return 1.0 / z; }
  bool operator==(const Line&) const = default;
};

struct FeasibleSet {
  double p_min = -std::numeric_limits<double>::infinity();
  double p_max = std::numeric_limits<double>::infinity();
  double q_min = -std::numeric_limits<double>::infinity();
  double q_max = std::numeric_limits<double>::infinity();
  std::optional<double> s_max;  // apparent-power cap, disk centred at the origin

  // Membership with an absolute slack on every constraint.
  bool contains(double p, double q, double tol = 0.0) const;
  bool operator==(const FeasibleSet&) const = default;
};

// Radial feeder rooted at node 0 (the slack bus). Nodes 1..N are stored at
// index id-1; every per-node vector in the library follows that layout.
class NetworkModel {
 public:
  // Validates everything (ids, radiality, impedances, feasible sets) and
  // orients each line away from the substation. Throws gridloop::Error.
  static NetworkModel create(double v0, std::vector<Node> nodes, std::vector<Line> lines,
                             std::vector<FeasibleSet> feasible);

  double v0() const { return v0_; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<FeasibleSet>& feasible() const { return feasible_; }
  const Node& node(int id) const { return nodes_.at(id - 1); }
  const FeasibleSet& feasible_set(int id) const { return feasible_.at(id - 1); }

  // Line feeding node `id` from its parent.
  const Line& feeder(int id) const { return lines_[feeder_.at(id - 1)]; }
  int parent(int id) const { return parent_.at(id); }
  const std::vector<int>& children(int id) const { return children_.at(id); }
  // Nodes 1..N in breadth-first order from the substation.
  const std::vector<int>& sweep_order() const { return order_; }
  // Longest substation-to-node path, in lines.
  int depth() const { return depth_; }

  Eigen::VectorXd nominal_p() const;
  Eigen::VectorXd nominal_q() const;

 private:
  NetworkModel() = default;

  double v0_ = 1.0;
  std::vector<Node> nodes_;
  std::vector<Line> lines_;
  std::vector<FeasibleSet> feasible_;
  std::vector<int> feeder_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<int> order_;
  int depth_ = 0;
};

enum class NetworkFormat { automatic, json, csv_pair };

// JSON file, or a directory holding buses.csv and branches.csv.
NetworkModel load_network(const std::filesystem::path& path,
                          NetworkFormat format = NetworkFormat::automatic);
NetworkModel network_from_json(const nlohmann::json& doc);
nlohmann::json network_to_json(const NetworkModel& net);
NetworkModel load_network_csv(const std::filesystem::path& buses_csv,
                              const std::filesystem::path& branches_csv, double v0 = 1.0);

// Random radial feeder for scaling runs. Deterministic in (n, seed).
NetworkModel synthetic_radial_feeder(int n, std::uint64_t seed);

struct AdmittanceMatrices {
  Eigen::SparseMatrix<Complex> Y;  // N x N, non-slack block
  Eigen::VectorXcd y_bar;          // coupling of each node to the slack
  Complex y00{0.0, 0.0};
};

AdmittanceMatrices build_admittance(const NetworkModel& net);

// Euclidean projection of (p, q) onto the box, intersected with the
// apparent-power disk when the set carries one.
std::pair<double, double> project_feasible(double p, double q, const FeasibleSet& set);

}  // namespace gridloop
