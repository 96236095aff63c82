#include "gridloop/linearizer.hpp"

#include <functional>

#include "gridloop/error.hpp"
#include "gridloop/plant.hpp"

namespace gridloop {

namespace {

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[j] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const nlohmann::json& rows, Eigen::Index n, const char* name) {
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
    throw Error(ErrorCode::dimension, std::string("linear model: ") + name + " must have " + std::to_string(n) + " rows");
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw Error(ErrorCode::dimension, std::string("linear model: ") + name + " must be square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& arr) {
  const auto values = arr.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

const char* to_string(LinearizationMethod method) {
  return method == LinearizationMethod::jacobian ? "jacobian" : "lindistflow";
}

LinearizationMethod linearization_from_string(const std::string& name) {
  if (name == "lindistflow") return LinearizationMethod::lindistflow;
  if (name == "jacobian") return LinearizationMethod::jacobian;
  throw Error(ErrorCode::invalid_argument, "unknown linearization method '" + name + "'");
}

LinearFlowModel lindistflow(const NetworkModel& net) {
  const int n = net.size();
  // Pre-order numbering gives every subtree a contiguous index range.
  std::vector<int> pre;  // pre-order list of node ids
  std::vector<int> first(n + 1), last(n + 1);
  pre.reserve(n);
  std::vector<std::pair<int, bool>> stack{{0, false}};
  while (!stack.empty()) {
    auto [id, done] = stack.back();
    stack.pop_back();
    if (done) {
      last[id] = static_cast<int>(pre.size());
      continue;
    }
    first[id] = static_cast<int>(pre.size());
    if (id != 0) pre.push_back(id);
    stack.push_back({id, true});
    const auto& kids = net.children(id);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back({*it, false});
  }

  // A(i, j) is the resistance shared by the paths to i and j. Row i copies
  // its parent's row, then the subtree of i sees the full path of i.
  LinearFlowModel model;
  model.A = Eigen::MatrixXd::Zero(n, n);
  model.B = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> r_path(n + 1, 0.0), x_path(n + 1, 0.0);
  for (int id : net.sweep_order()) {
    const int parent = net.parent(id);
    const Line& ln = net.feeder(id);
    r_path[id] = r_path[parent] + ln.z.real();
    x_path[id] = x_path[parent] + ln.z.imag();
    if (parent != 0) {
      model.A.row(id - 1) = model.A.row(parent - 1);
      model.B.row(id - 1) = model.B.row(parent - 1);
    }
    for (int k = first[id]; k < last[id]; ++k) {
      model.A(id - 1, pre[k] - 1) = r_path[id];
      model.B(id - 1, pre[k] - 1) = x_path[id];
    }
  }
  model.A /= net.v0();
  model.B /= net.v0();
  model.r0 = Eigen::VectorXd::Constant(n, net.v0());
  model.method = LinearizationMethod::lindistflow;
  return model;
}

LinearFlowModel jacobian_linearize(const NetworkModel& net, const Eigen::VectorXd& p_star,
                                   const Eigen::VectorXd& q_star, double h) {
  const int n = net.size();
  if (p_star.size() != n || q_star.size() != n)
    throw Error(ErrorCode::dimension, "jacobian_linearize: operating point has the wrong length");
  if (!(h > 0.0)) throw Error(ErrorCode::invalid_argument, "jacobian_linearize: h must be positive");

  auto voltages = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& q, const char* where) {
    const auto sol = solve_power_flow(net, p, q);
    if (!sol.converged)
      throw Error(ErrorCode::convergence, std::string("jacobian_linearize: power flow diverged at ") + where);
    return sol.v_mag;
  };

  LinearFlowModel model;
  model.A.resize(n, n);
  model.B.resize(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd up = p_star, down = p_star;
    up[j] += h;
    down[j] -= h;
    model.A.col(j) = (voltages(up, q_star, "a perturbed point") - voltages(down, q_star, "a perturbed point")) / (2 * h);
    up = q_star;
    down = q_star;
    up[j] += h;
    down[j] -= h;
    model.B.col(j) = (voltages(p_star, up, "a perturbed point") - voltages(p_star, down, "a perturbed point")) / (2 * h);
  }
  model.r0 = voltages(p_star, q_star, "the operating point") - model.A * p_star - model.B * q_star;
  model.method = LinearizationMethod::jacobian;
  model.base_p = p_star;
  model.base_q = q_star;
  return model;
}

Eigen::VectorXd eval_linear(const LinearFlowModel& model, const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != model.size() || q.size() != model.size())
    throw Error(ErrorCode::dimension, "eval_linear: expected vectors of length " + std::to_string(model.size()));
  return model.A * p + model.B * q + model.r0;
}

nlohmann::json linear_model_to_json(const LinearFlowModel& model) {
  nlohmann::json doc;
  doc["method"] = to_string(model.method);
  doc["A"] = matrix_rows(model.A);
  doc["B"] = matrix_rows(model.B);
  doc["r0"] = std::vector<double>(model.r0.data(), model.r0.data() + model.r0.size());
  if (model.base_p) doc["base_p"] = std::vector<double>(model.base_p->data(), model.base_p->data() + model.base_p->size());
  if (model.base_q) doc["base_q"] = std::vector<double>(model.base_q->data(), model.base_q->data() + model.base_q->size());
  return doc;
}

LinearFlowModel linear_model_from_json(const nlohmann::json& doc) {
  try {
    LinearFlowModel model;
    model.method = linearization_from_string(doc.at("method").get<std::string>());
    model.r0 = vector_from_json(doc.at("r0"));
    model.A = matrix_from_rows(doc.at("A"), model.r0.size(), "A");
    model.B = matrix_from_rows(doc.at("B"), model.r0.size(), "B");
    if (doc.contains("base_p")) model.base_p = vector_from_json(doc["base_p"]);
    if (doc.contains("base_q")) model.base_q = vector_from_json(doc["base_q"]);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("linear model JSON: ") + e.what());
  }
}

}  // namespace gridloop
