#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridloop/controller.hpp"
#include "gridloop/estimator.hpp"
#include "gridloop/netmodel.hpp"
#include "gridloop/scenario.hpp"
#include "gridloop/sensing.hpp"

namespace gridloop {

// Everything derived once from a ScenarioConfig and shared read-only by trials.
struct PreparedScenario {
  ScenarioConfig cfg;
  NetworkModel net;
  LinearFlowModel model;
  CostParams cost;
  MeasurementPlan plan;
  std::optional<StepSizeCertificate> certificate;  // absent when the check was waived
  std::shared_ptr<const WlsEstimator> estimator;

  ControllerState initial_state() const;
};

// Loads the network, builds the model, cost and plan, and certifies the step
// size. Throws ErrorCode::certificate when it fails and no override is set.
PreparedScenario prepare_scenario(const ScenarioConfig& cfg);

// Same network objects, different scenario knobs (used for step-size sweeps
// and tightened bounds). Re-certifies.
PreparedScenario reconfigure(const PreparedScenario& base, const ScenarioConfig& cfg);

StepSizeCertificate certify(const PreparedScenario& prep);

struct IterationRecord {
  int iter = 0;
  Eigen::VectorXd v_true;
  Eigen::VectorXd v_hat;
  Eigen::VectorXd p;
  Eigen::VectorXd q;
  double mu_lower_norm = 0.0;
  double mu_upper_norm = 0.0;
  double cost_local = 0.0;
  double cost_substation = 0.0;
  double max_violation = 0.0;
  double se_err_mean = 0.0;
  double se_err_max = 0.0;
  double dist_to_saddle = std::numeric_limits<double>::quiet_NaN();
  double alpha_sample = 0.0;  // 2 |r_lin - r_hat|^2
  double rho_sample = 0.0;    // 2 |r_lin - r_true|^2
};

struct SimulationTrace {
  std::vector<IterationRecord> records;
  ControllerState final_state;
  Eigen::VectorXd final_v;
  double final_cost_local = 0.0;
  double final_cost_substation = 0.0;
  int linear_fallbacks = 0;
  std::uint64_t seed = 0;
  FeedbackMode mode = FeedbackMode::se_loop;

  double final_cost() const { return final_cost_local + final_cost_substation; }
};

struct RunOptions {
  std::optional<FeedbackMode> mode;         // default: cfg.feedback_mode
  std::optional<std::uint64_t> seed;        // default: cfg.plan.seed
  const Eigen::VectorXd* saddle = nullptr;  // stacked x*, enables dist_to_saddle
  bool keep_vectors = true;                 // false: per-node vectors are not stored
  std::optional<ControllerState> start;
};

SimulationTrace run_closed_loop(const PreparedScenario& prep, const RunOptions& options = {});

// Runs `count` trials with seeds seed0 + t, in parallel up to GRIDLOOP_THREADS.
// Results come back in trial order regardless of scheduling.
std::vector<SimulationTrace> run_trials(const PreparedScenario& prep, int count, const RunOptions& options = {});

// Calls fn(t) for t in [0, count) on a bounded thread pool.
void parallel_for(int count, const std::function<void(int)>& fn);
int worker_threads();

struct SaddleResult {
  Eigen::VectorXd x;  // stacked (p, q, mu_lower, mu_upper)
  long long iterations = 0;
  double step_norm = 0.0;      // |T(x) - x| at return
  double eps = 0.0;
  bool polished = false;
};

// Fixed point of the exact primal-dual map with the linear model as plant
// and noiseless feedback, using eps = eps_max / 10.
SaddleResult saddle_oracle(const PreparedScenario& prep, const std::optional<ControllerState>& start = std::nullopt,
                           double tol = 1e-12, long long max_iter = 10'000'000);

// |T(x) - x| for the linear-pipeline map with step eps.
double fixed_point_residual(const PreparedScenario& prep, const Eigen::VectorXd& x, double eps);

struct BoundReport {
  double alpha_hat = 0.0;
  double rho_hat = 0.0;
  double M = 0.0;
  double L = 0.0;
  double eps = 0.0;
  double eps_max = 0.0;
  double denominator = 0.0;
  double bound = 0.0;
  double empirical = 0.0;
  int trials = 0;
  int iterations = 0;
  int tail_start = 0;
  std::vector<double> mean_sq_dist;  // trial mean of |x^k - x*|^2 per k
  std::string expectation_note;

  bool holds() const { return empirical <= bound; }
};

BoundReport verify_tracking_bound(const PreparedScenario& prep, const Eigen::VectorXd& x_star, int trials);

struct ModeSummary {
  FeedbackMode mode = FeedbackMode::se_loop;
  std::vector<double> running_mean_error;  // from burn_in onward
  std::vector<double> running_max_error;
  double final_running_mean = 0.0;
  double final_running_max = 0.0;
  int violations = 0;  // terminal true voltages outside [v_min, v_max]
  double final_cost = 0.0;
  double min_voltage = 0.0;
};

struct ComparisonReport {
  int burn_in = 0;
  std::vector<ModeSummary> modes;  // se_loop, raw_measurements, pseudo_only
  const ModeSummary& get(FeedbackMode mode) const;
  double reduction_vs_raw() const;     // 1 - se/raw
  double reduction_vs_pseudo() const;  // 1 - se/pseudo
};

ComparisonReport run_baseline_comparison(const PreparedScenario& prep);

struct TightenReport {
  double confidence = 0.0;
  double halfwidth_max = 0.0;
  double v_min_original = 0.0;
  double v_min_tightened = 0.0;
  int base_violations = 0;
  int tight_violations = 0;
  double base_cost = 0.0;
  double tight_cost = 0.0;
  double base_min_v = 0.0;
  double tight_min_v = 0.0;
  int n = 0;
};

// Maximum 'c'-sigma halfwidth of linearly reconstructed voltages under the plan.
double max_voltage_halfwidth(const PreparedScenario& prep, double c);
Eigen::VectorXd voltage_halfwidths(const PreparedScenario& prep, double c);

TightenReport tightened_bound_experiment(const PreparedScenario& prep, double c);

int count_violations(const Eigen::VectorXd& v, double v_min, double v_max);

}  // namespace gridloop
