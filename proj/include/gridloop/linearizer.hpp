#pragma once

#include <optional>

#include <Eigen/Dense>

#include "gridloop/netmodel.hpp"
#include "json.hpp"

namespace gridloop {

enum class LinearizationMethod { lindistflow, jacobian };

// r = A p + B q + r0, voltage magnitudes of nodes 1..N.
struct LinearFlowModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd r0;
  LinearizationMethod method = LinearizationMethod::lindistflow;
  std::optional<Eigen::VectorXd> base_p;  // operating point, jacobian only
  std::optional<Eigen::VectorXd> base_q;

  int size() const { return static_cast<int>(r0.size()); }
};

LinearFlowModel lindistflow(const NetworkModel& net);

// Central differences of the plant's voltage magnitudes around (p*, q*).
LinearFlowModel jacobian_linearize(const NetworkModel& net, const Eigen::VectorXd& p_star,
                                   const Eigen::VectorXd& q_star, double h = 1e-5);

Eigen::VectorXd eval_linear(const LinearFlowModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q);

nlohmann::json linear_model_to_json(const LinearFlowModel& model);
LinearFlowModel linear_model_from_json(const nlohmann::json& doc);

const char* to_string(LinearizationMethod method);
LinearizationMethod linearization_from_string(const std::string& name);

}  // namespace gridloop
