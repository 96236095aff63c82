#include "gridloop/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <sstream>
#include <mutex>
#include <thread>

#include "gridloop/error.hpp"
#include "gridloop/plant.hpp"

namespace gridloop {

namespace {

std::string short_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

NetworkModel scale_loads(const NetworkModel& net, double s) {
  std::vector<Node> nodes = net.nodes();
  std::vector<FeasibleSet> sets = net.feasible();
  for (auto& nd : nodes) {
    nd.p0 *= s;
    nd.q0 *= s;
  }
  for (auto& fs : sets) {
    for (double* b : {&fs.p_min, &fs.p_max, &fs.q_min, &fs.q_max})
      if (std::isfinite(*b)) *b *= s;
    if (fs.s_max) *fs.s_max *= s;
  }
  return NetworkModel::create(net.v0(), std::move(nodes), net.lines(), std::move(sets));
}

PreparedScenario assemble(const ScenarioConfig& cfg, NetworkModel net, LinearFlowModel model) {
  const int n = net.size();
  CostParams cost;
  cost.weight_p = Eigen::VectorXd::Constant(n, cfg.cost.weight_p);
  cost.weight_q = Eigen::VectorXd::Constant(n, cfg.cost.weight_q);
  cost.p_nominal = net.nominal_p();
  cost.q_nominal = net.nominal_q();
  cost.alpha = cfg.cost.alpha;
  cost.p0_offset = cfg.cost.p0_offset;
  cost.p0_target = cfg.cost.p0_target ? *cfg.cost.p0_target : cost.p0_lossless(cost.p_nominal);

  MeasurementPlan plan;
  if (!cfg.plan.sensor_nodes.empty()) {
    plan.sensor_nodes = cfg.plan.sensor_nodes;
    std::sort(plan.sensor_nodes.begin(), plan.sensor_nodes.end());
  } else if (cfg.plan.sensor_fraction > 0.0) {
    plan.sensor_nodes = place_sensors(n, cfg.plan.sensor_fraction, cfg.plan.placement_seed);
  }
  plan.sensor_sigma = cfg.plan.sensor_sigma;
  plan.pseudo_sigma = cfg.plan.pseudo_sigma;
  plan.pseudo_floor = cfg.plan.pseudo_floor;
  plan.min_sigma = cfg.plan.min_sigma;
  plan.pseudo_base_p = net.nominal_p();
  plan.pseudo_base_q = net.nominal_q();
  plan.seed = cfg.plan.seed;
  plan.pseudo_redraw = cfg.plan.pseudo_redraw;
  plan.pseudo_center = cfg.plan.pseudo_center;
  plan.v_ref = net.v0();
  plan.validate(n);

  PreparedScenario prep{cfg, std::move(net), std::move(model), std::move(cost), std::move(plan), std::nullopt, nullptr};
  if (!cfg.allow_uncertified) {
    prep.certificate = certify(prep);
    if (!prep.certificate->certified())
      throw Error(ErrorCode::certificate, "step size eps = " + short_number(prep.certificate->eps) +
                                              " is not below eps_max = 2M/L^2 = " +
                                              short_number(prep.certificate->eps_max) +
                                              " (set controller.allow_uncertified to override)");
  }
  prep.estimator = std::make_shared<WlsEstimator>(prep.plan, prep.model);
  return prep;
}

double norm_or_zero(const Eigen::VectorXd& v) { return v.size() ? v.norm() : 0.0; }

ControllerState step_linear(const PreparedScenario& prep, const ControllerState& s, const ControllerConfig& cfg) {
  const Eigen::VectorXd r = eval_linear(prep.model, s.p, s.q);
  const auto grads = primal_grad(s, prep.cost, prep.model, cfg);
  ControllerState next = primal_step(s, grads, prep.net, cfg);
  const ControllerState dual = dual_step(s, r, cfg);
  next.mu_lower = dual.mu_lower;
  next.mu_upper = dual.mu_upper;
  return next;
}

// Affine saddle operator Phi(x) = J x + c for the linear pipeline.
void saddle_operator(const PreparedScenario& prep, Eigen::MatrixXd& J, Eigen::VectorXd& c) {
  const int n = prep.net.size();
  const auto& A = prep.model.A;
  const auto& B = prep.model.B;
  const auto& cost = prep.cost;
  const double eta = prep.cfg.controller.eta;
  J = Eigen::MatrixXd::Zero(4 * n, 4 * n);
  J.block(0, 0, n, n).setConstant(2.0 * cost.alpha);
  J.block(0, 0, n, n).diagonal() += 2.0 * cost.weight_p;
  J.block(n, n, n, n).diagonal() = 2.0 * cost.weight_q;
  J.block(0, 2 * n, n, n) = -A.transpose();
  J.block(0, 3 * n, n, n) = A.transpose();
  J.block(n, 2 * n, n, n) = -B.transpose();
  J.block(n, 3 * n, n, n) = B.transpose();
  J.block(2 * n, 0, n, n) = A;
  J.block(2 * n, n, n, n) = B;
  J.block(3 * n, 0, n, n) = -A;
  J.block(3 * n, n, n, n) = -B;
  J.block(2 * n, 2 * n, 2 * n, 2 * n).diagonal().setConstant(eta);
  c.resize(4 * n);
  c.head(n) = -2.0 * cost.weight_p.cwiseProduct(cost.p_nominal) -
              Eigen::VectorXd::Constant(n, 2.0 * cost.alpha * (cost.p0_offset - cost.p0_target));
  c.segment(n, n) = -2.0 * cost.weight_q.cwiseProduct(cost.q_nominal);
  c.segment(2 * n, n) = prep.model.r0.array() - prep.cfg.controller.v_min;
  c.tail(n) = prep.cfg.controller.v_max - prep.model.r0.array();
}

// One exact solve of the piecewise-linear fixed-point equations on the
// active set read off at x. Box-only feasible sets.
Eigen::VectorXd polish_active_set(const PreparedScenario& prep, const Eigen::MatrixXd& J, const Eigen::VectorXd& c,
                                  const Eigen::VectorXd& x, double eps) {
  const int n = prep.net.size();
  const Eigen::VectorXd y = x - eps * (J * x + c);
  Eigen::MatrixXd S = J;
  Eigen::VectorXd t = -c;
  for (int i = 0; i < 4 * n; ++i) {
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    if (i < 2 * n) {
      const FeasibleSet& fs = prep.net.feasible()[i % n];
      lo = i < n ? fs.p_min : fs.q_min;
      hi = i < n ? fs.p_max : fs.q_max;
    }
    double fixed = std::numeric_limits<double>::quiet_NaN();
    if (y[i] < lo) fixed = lo;
    if (y[i] > hi) fixed = hi;
    if (std::isnan(fixed)) continue;
    S.row(i).setZero();
    S(i, i) = 1.0;
    t[i] = fixed;
  }
  return S.partialPivLu().solve(t);
}

}  // namespace

ControllerState PreparedScenario::initial_state() const {
  const int n = net.size();
  Eigen::VectorXd p = net.nominal_p(), q = net.nominal_q();
  for (int i = 0; i < n; ++i) std::tie(p[i], q[i]) = project_feasible(p[i], q[i], net.feasible()[i]);
  return ControllerState::initial(p, q);
}

StepSizeCertificate certify(const PreparedScenario& prep) {
  return certify_step_size(prep.cost, prep.model, prep.cfg.controller, prep.net);
}

PreparedScenario prepare_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  NetworkModel net = cfg.synthetic.nodes > 0 ? synthetic_radial_feeder(cfg.synthetic.nodes, cfg.synthetic.seed)
                                             : load_network(cfg.network_path());
  if (cfg.load_scale != 1.0) net = scale_loads(net, cfg.load_scale);
  LinearFlowModel model = cfg.linearization == LinearizationMethod::jacobian
                              ? jacobian_linearize(net, net.nominal_p(), net.nominal_q())
                              : lindistflow(net);
  return assemble(cfg, std::move(net), std::move(model));
}

PreparedScenario reconfigure(const PreparedScenario& base, const ScenarioConfig& cfg) {
  cfg.validate();
  return assemble(cfg, base.net, base.model);
}

int count_violations(const Eigen::VectorXd& v, double v_min, double v_max) {
  return static_cast<int>((v.array() < v_min).count() + (v.array() > v_max).count());
}

SimulationTrace run_closed_loop(const PreparedScenario& prep, const RunOptions& options) {
  const ScenarioConfig& cfg = prep.cfg;
  const int n = prep.net.size();
  const FeedbackMode mode = options.mode.value_or(cfg.feedback_mode);
  MeasurementPlan plan = prep.plan;
  plan.seed = options.seed.value_or(cfg.plan.seed);
  const WlsEstimator& est = *prep.estimator;
  const auto& sensors = plan.sensor_nodes;
  const int m = static_cast<int>(sensors.size());
  const VoltageMode vmode = cfg.estimator.voltage_mode;

  SimulationTrace trace;
  trace.seed = plan.seed;
  trace.mode = mode;
  trace.records.reserve(cfg.iterations);
  ControllerState state = options.start.value_or(prep.initial_state());

  auto plant = [&](const ControllerState& s, int iter, double& p_slack) -> Eigen::VectorXd {
    if (cfg.plant == PlantKind::linear) {
      p_slack = prep.cost.p0_lossless(s.p);
      return eval_linear(prep.model, s.p, s.q);
    }
    const auto sol = solve_power_flow(prep.net, s.p, s.q);
    if (!sol.converged)
      throw Error(ErrorCode::convergence, "plant power flow diverged at iteration " + std::to_string(iter) +
                                              " (residual " + std::to_string(sol.residual) + ")");
    p_slack = sol.p_slack;
    return sol.v_mag;
  };

  auto voltages_of = [&](const Eigen::VectorXd& z) {
    bool fell_back = false;
    Eigen::VectorXd r = estimate_voltages(z, prep.net, prep.model, vmode, &fell_back);
    if (fell_back) ++trace.linear_fallbacks;
    return r;
  };

  for (int k = 0; k < cfg.iterations; ++k) {
    double p_slack = 0.0;
    const Eigen::VectorXd v_true = plant(state, k, p_slack);
    Eigen::VectorXd r_hat;
    switch (mode) {
      case FeedbackMode::full_exact:
        r_hat = v_true;
        break;
      case FeedbackMode::linear_model:
        r_hat = eval_linear(prep.model, state.p, state.q);
        break;
      case FeedbackMode::raw_measurements:
        r_hat.resize(n);
        for (int i = 0; i < n; ++i)
          r_hat[i] = v_true[i] * (1.0 + plan.sensor_sigma * channel_noise(plan.seed, k, ChannelKind::voltage, i + 1));
        break;
      case FeedbackMode::pseudo_only:
      case FeedbackMode::se_loop: {
        const MeasurementBatch batch = sample_measurements(plan, v_true, state.p, state.q, k);
        const Eigen::VectorXd z_pseudo = batch.y.tail(2 * n);
        if (mode == FeedbackMode::pseudo_only) {
          r_hat = voltages_of(z_pseudo);
          break;
        }
        Eigen::VectorXd y_sensor = batch.y.head(m);
        if (m > 0) {
          if (cfg.estimator.intercept == InterceptMode::relinearized && vmode == VoltageMode::nonlinear) {
            const Eigen::VectorXd v_pseudo = voltages_of(z_pseudo);
            const Eigen::VectorXd uz = est.sensor_rows() * z_pseudo;
            for (int s = 0; s < m; ++s) y_sensor[s] -= v_pseudo[sensors[s] - 1] - uz[s];
          } else {
            for (int s = 0; s < m; ++s) y_sensor[s] -= prep.model.r0[sensors[s] - 1];
          }
        }
        r_hat = voltages_of(est.solve(y_sensor, z_pseudo));
        break;
      }
    }

    IterationRecord rec;
    rec.iter = k;
    rec.mu_lower_norm = norm_or_zero(state.mu_lower);
    rec.mu_upper_norm = norm_or_zero(state.mu_upper);
    rec.cost_local = prep.cost.local(state.p, state.q);
    rec.cost_substation = prep.cost.substation(p_slack);
    rec.max_violation = std::max({0.0, (cfg.controller.v_min - v_true.array()).maxCoeff(),
                                  (v_true.array() - cfg.controller.v_max).maxCoeff()});
    const Eigen::ArrayXd err = (r_hat - v_true).array().abs();
    rec.se_err_mean = err.mean();
    rec.se_err_max = err.maxCoeff();
    if (options.saddle) rec.dist_to_saddle = (state.stacked() - *options.saddle).norm();
    const Eigen::VectorXd r_lin = eval_linear(prep.model, state.p, state.q);
    rec.alpha_sample = 2.0 * (r_lin - r_hat).squaredNorm();
    rec.rho_sample = 2.0 * (r_lin - v_true).squaredNorm();
    if (options.keep_vectors) {
      rec.v_true = v_true;
      rec.v_hat = r_hat;
      rec.p = state.p;
      rec.q = state.q;
    }
    trace.records.push_back(std::move(rec));

    const auto grads = primal_grad(state, prep.cost, prep.model, cfg.controller);
    ControllerState next = primal_step(state, grads, prep.net, cfg.controller);
    const ControllerState dual = dual_step(state, r_hat, cfg.controller);
    next.mu_lower = dual.mu_lower;
    next.mu_upper = dual.mu_upper;
    state = std::move(next);
  }

  double p_slack = 0.0;
  trace.final_v = plant(state, cfg.iterations, p_slack);
  trace.final_cost_local = prep.cost.local(state.p, state.q);
  trace.final_cost_substation = prep.cost.substation(p_slack);
  trace.final_state = std::move(state);
  return trace;
}

int worker_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("GRIDLOOP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  return hw;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_threads(), count);
  if (workers <= 1) {
    for (int t = 0; t < count; ++t) fn(t);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int t = next++; t < count; t = next++) {
        try {
          fn(t);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<SimulationTrace> run_trials(const PreparedScenario& prep, int count, const RunOptions& options) {
  std::vector<SimulationTrace> out(count);
  const std::uint64_t seed0 = options.seed.value_or(prep.cfg.plan.seed);
  parallel_for(count, [&](int t) {
    RunOptions o = options;
    o.seed = seed0 + static_cast<std::uint64_t>(t);
    out[t] = run_closed_loop(prep, o);
  });
  return out;
}

double fixed_point_residual(const PreparedScenario& prep, const Eigen::VectorXd& x, double eps) {
  ControllerConfig c = prep.cfg.controller;
  c.eps_primal = c.eps_dual = eps;
  const ControllerState s = ControllerState::from_stacked(x);
  return (step_linear(prep, s, c).stacked() - x).norm();
}

SaddleResult saddle_oracle(const PreparedScenario& prep, const std::optional<ControllerState>& start, double tol,
                           long long max_iter) {
  const StepSizeCertificate cert = prep.certificate ? *prep.certificate : certify(prep);
  SaddleResult res;
  res.eps = cert.eps_max / 10.0;
  ControllerConfig c = prep.cfg.controller;
  c.eps_primal = c.eps_dual = res.eps;

  // The map is piecewise affine. Once the iterate has found the right active
  // set, one linear solve lands on the fixed point; try that periodically.
  const int n = prep.net.size();
  const bool box_only = std::none_of(prep.net.feasible().begin(), prep.net.feasible().end(),
                                     [](const FeasibleSet& fs) { return fs.s_max.has_value(); });
  const bool can_polish = box_only && 4 * n <= 2000;
  Eigen::MatrixXd J;
  Eigen::VectorXd cvec;
  if (can_polish) saddle_operator(prep, J, cvec);
  constexpr long long kPolishEvery = 1000;

  ControllerState s = start.value_or(prep.initial_state());
  double step = std::numeric_limits<double>::infinity();
  for (long long k = 0; k < max_iter; ++k) {
    ControllerState next = step_linear(prep, s, c);
    step = (next.stacked() - s.stacked()).norm();
    s = std::move(next);
    if (step <= tol) {
      res.iterations = k + 1;
      break;
    }
    if (can_polish && (k + 1) % kPolishEvery == 0) {
      const Eigen::VectorXd candidate = polish_active_set(prep, J, cvec, s.stacked(), res.eps);
      if (candidate.allFinite() && fixed_point_residual(prep, candidate, res.eps) <= tol) {
        s = ControllerState::from_stacked(candidate);
        step = 0.0;
        res.iterations = k + 1;
        res.polished = true;
        break;
      }
    }
  }
  if (step > tol)
    throw Error(ErrorCode::convergence, "saddle oracle did not converge within " + std::to_string(max_iter) +
                                            " iterations (last step " + std::to_string(step) + ")");
  res.x = s.stacked();
  res.step_norm = fixed_point_residual(prep, res.x, res.eps);

  // Final refinement: keep an exact active-set solution if it is a better fixed point.
  if (can_polish) {
    Eigen::VectorXd x = res.x;
    for (int round = 0; round < 5; ++round) {
      const Eigen::VectorXd candidate = polish_active_set(prep, J, cvec, x, res.eps);
      if (!candidate.allFinite()) break;
      const double r = fixed_point_residual(prep, candidate, res.eps);
      if (r >= res.step_norm) break;
      res.x = x = candidate;
      res.step_norm = r;
      res.polished = true;
    }
  }
  return res;
}

BoundReport verify_tracking_bound(const PreparedScenario& prep, const Eigen::VectorXd& x_star, int trials) {
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "verify_tracking_bound needs at least one trial");
  const StepSizeCertificate cert = prep.certificate ? *prep.certificate : certify(prep);
  BoundReport rep;
  rep.M = cert.M;
  rep.L = cert.L;
  rep.eps = prep.cfg.controller.eps();
  rep.eps_max = cert.eps_max;
  rep.denominator = 2.0 * rep.M / rep.eps - rep.L * rep.L;
  if (!(rep.denominator > 0.0))
    throw Error(ErrorCode::certificate, "bound denominator 2M/eps - L^2 = " + std::to_string(rep.denominator) +
                                            " is not positive; eps must be below eps_max = " +
                                            std::to_string(cert.eps_max));
  RunOptions opt;
  opt.saddle = &x_star;
  opt.keep_vectors = false;
  const auto traces = run_trials(prep, trials, opt);

  const int K = prep.cfg.iterations;
  rep.trials = trials;
  rep.iterations = K;
  rep.tail_start = static_cast<int>(std::floor(0.8 * K));
  rep.mean_sq_dist.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    double mean_alpha = 0.0;
    for (const auto& tr : traces) {
      const auto& rec = tr.records[k];
      rep.mean_sq_dist[k] += rec.dist_to_saddle * rec.dist_to_saddle;
      mean_alpha += rec.alpha_sample;
      rep.rho_hat = std::max(rep.rho_hat, rec.rho_sample);
    }
    rep.mean_sq_dist[k] /= trials;
    rep.alpha_hat = std::max(rep.alpha_hat, mean_alpha / trials);
  }
  double tail = 0.0;
  for (int k = rep.tail_start; k < K; ++k) tail += rep.mean_sq_dist[k];
  rep.empirical = tail / (K - rep.tail_start);
  rep.bound = (rep.rho_hat + 3.0 * rep.alpha_hat) / rep.denominator;
  rep.expectation_note =
      "expectations are trial means over independent noise seeds along realized trajectories; alpha_hat is the "
      "largest per-iteration mean of |Phi - Phi_bar|^2, rho_hat the largest single |Phi_bar - Phi_tilde|^2";
  return rep;
}

const ModeSummary& ComparisonReport::get(FeedbackMode mode) const {
  for (const auto& m : modes)
    if (m.mode == mode) return m;
  throw Error(ErrorCode::invalid_argument, std::string("comparison has no mode ") + to_string(mode));
}

double ComparisonReport::reduction_vs_raw() const {
  return 1.0 - get(FeedbackMode::se_loop).final_running_mean / get(FeedbackMode::raw_measurements).final_running_mean;
}

double ComparisonReport::reduction_vs_pseudo() const {
  return 1.0 - get(FeedbackMode::se_loop).final_running_mean / get(FeedbackMode::pseudo_only).final_running_mean;
}

ComparisonReport run_baseline_comparison(const PreparedScenario& prep) {
  ComparisonReport rep;
  rep.burn_in = prep.cfg.report.burn_in;
  const FeedbackMode modes[] = {FeedbackMode::se_loop, FeedbackMode::raw_measurements, FeedbackMode::pseudo_only};
  rep.modes.resize(3);
  parallel_for(3, [&](int i) {
    RunOptions opt;
    opt.mode = modes[i];
    opt.keep_vectors = false;
    const SimulationTrace tr = run_closed_loop(prep, opt);
    ModeSummary s;
    s.mode = modes[i];
    double sum_mean = 0.0, sum_max = 0.0;
    for (int k = rep.burn_in; k < static_cast<int>(tr.records.size()); ++k) {
      sum_mean += tr.records[k].se_err_mean;
      sum_max += tr.records[k].se_err_max;
      const double count = k - rep.burn_in + 1;
      s.running_mean_error.push_back(sum_mean / count);
      s.running_max_error.push_back(sum_max / count);
    }
    s.final_running_mean = s.running_mean_error.back();
    s.final_running_max = s.running_max_error.back();
    s.violations = count_violations(tr.final_v, prep.cfg.controller.v_min, prep.cfg.controller.v_max);
    s.final_cost = tr.final_cost();
    s.min_voltage = tr.final_v.minCoeff();
    rep.modes[i] = std::move(s);
  });
  return rep;
}

Eigen::VectorXd voltage_halfwidths(const PreparedScenario& prep, double c) {
  return c * prep.estimator->voltage_variance(prep.model).cwiseMax(0.0).cwiseSqrt();
}

double max_voltage_halfwidth(const PreparedScenario& prep, double c) { return voltage_halfwidths(prep, c).maxCoeff(); }

TightenReport tightened_bound_experiment(const PreparedScenario& prep, double c) {
  if (prep.cfg.feedback_mode != FeedbackMode::se_loop)
    throw Error(ErrorCode::invalid_argument, "the tightened-bound experiment needs feedback_mode se_loop");
  TightenReport rep;
  rep.n = prep.net.size();
  rep.confidence = c;
  rep.halfwidth_max = max_voltage_halfwidth(prep, c);
  rep.v_min_original = prep.cfg.controller.v_min;
  rep.v_min_tightened = rep.v_min_original + rep.halfwidth_max;
  if (rep.v_min_tightened >= prep.cfg.controller.v_max)
    throw Error(ErrorCode::invalid_argument, "tightened lower bound " + std::to_string(rep.v_min_tightened) +
                                                 " is not below v_max");
  ScenarioConfig tight_cfg = prep.cfg;
  tight_cfg.controller.v_min = rep.v_min_tightened;
  const PreparedScenario tight = reconfigure(prep, tight_cfg);

  SimulationTrace runs[2];
  parallel_for(2, [&](int i) {
    RunOptions opt;
    opt.keep_vectors = false;
    runs[i] = run_closed_loop(i == 0 ? prep : tight, opt);
  });
  rep.base_violations = count_violations(runs[0].final_v, rep.v_min_original, prep.cfg.controller.v_max);
  rep.tight_violations = count_violations(runs[1].final_v, rep.v_min_original, prep.cfg.controller.v_max);
  rep.base_cost = runs[0].final_cost();
  rep.tight_cost = runs[1].final_cost();
  rep.base_min_v = runs[0].final_v.minCoeff();
  rep.tight_min_v = runs[1].final_v.minCoeff();
  return rep;
}

}  // namespace gridloop
