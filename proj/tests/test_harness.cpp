#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gridloop/commands.hpp"
#include "gridloop/harness.hpp"
#include "gridloop/outputs.hpp"
#include "gridloop/report.hpp"
#include "support.hpp"

using namespace gridloop;
using testing_support::error_code_of;
using testing_support::scratch_dir;
using testing_support::source_path;

namespace {

ScenarioConfig scenario(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return with_overrides(load_scenario(source_path("scenarios/" + name + ".json")), overrides);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Hash from the coreutils tool, independent of the library's digest code.
std::string coreutils_sha256(const std::filesystem::path& p) {
  const std::string cmd = "sha256sum '" + p.string() + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[65] = {};
  const size_t got = fread(buf, 1, 64, pipe);
  pclose(pipe);
  return std::string(buf, got);
}

}  // namespace

TEST_CASE("closed loop is deterministic in the seed") {
  const PreparedScenario prep = prepare_scenario(scenario("two_bus"));
  const SimulationTrace a = run_closed_loop(prep);
  const SimulationTrace b = run_closed_loop(prep);
  RunOptions other;
  other.seed = 8;
  const SimulationTrace c = run_closed_loop(prep, other);
  REQUIRE(a.records.size() == 200);
  bool differs = false;
  for (size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].v_hat == b.records[k].v_hat);
    CHECK(a.records[k].p == b.records[k].p);
    differs = differs || a.records[k].v_hat != c.records[k].v_hat;
  }
  CHECK(differs);
}

TEST_CASE("parallel trials match sequential runs with offset seeds") {
  const PreparedScenario prep = prepare_scenario(scenario("two_bus", {"iterations=60", "report.burn_in=5"}));
  const auto trials = run_trials(prep, 4);
  REQUIRE(trials.size() == 4);
  for (int t = 0; t < 4; ++t) {
    RunOptions opt;
    opt.seed = prep.cfg.plan.seed + t;
    const SimulationTrace single = run_closed_loop(prep, opt);
    CHECK(trials[t].seed == prep.cfg.plan.seed + t);
    CHECK(trials[t].final_state.stacked() == single.final_state.stacked());
  }
}

TEST_CASE("uncertified step sizes are refused unless allowed") {
  CHECK(error_code_of([] { prepare_scenario(scenario("two_bus", {"controller.eps_primal=1.0"})); }) ==
        ErrorCode::certificate);
  const PreparedScenario p =
      prepare_scenario(scenario("two_bus", {"controller.eps_primal=1.0", "controller.allow_uncertified=true"}));
  CHECK_FALSE(p.certificate.has_value());
  const CommandResult r = cmd_certify(scenario("two_bus", {"controller.eps_primal=1.0"}));
  CHECK(r.certificate_failed);
}

TEST_CASE("saddle point does not depend on the starting point") {
  const PreparedScenario prep = prepare_scenario(scenario("ieee33_contraction"));
  const int n = prep.net.size();
  const SaddleResult a = saddle_oracle(prep);
  ControllerState zero = ControllerState::initial(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
  const SaddleResult b = saddle_oracle(prep, zero);
  ControllerState far = prep.initial_state();
  far.mu_lower.setConstant(3.0);
  far.mu_upper.setConstant(1.0);
  const SaddleResult c = saddle_oracle(prep, far);
  CHECK((a.x - b.x).norm() <= 1e-9);
  CHECK((a.x - c.x).norm() <= 1e-9);
  CHECK(a.step_norm <= 1e-12);
}

TEST_CASE("saddle point satisfies the regularized optimality conditions") {
  const PreparedScenario prep = prepare_scenario(scenario("ieee33_contraction"));
  const SaddleResult s = saddle_oracle(prep);
  const ControllerState x = ControllerState::from_stacked(s.x);
  const ControllerConfig& c = prep.cfg.controller;
  const Eigen::VectorXd r = eval_linear(prep.model, x.p, x.q);
  // Dual: mu = max(0, violation / eta).
  const Eigen::VectorXd ml = ((c.v_min - r.array()) / c.eta).max(0.0).matrix();
  const Eigen::VectorXd mu = ((r.array() - c.v_max) / c.eta).max(0.0).matrix();
  CHECK((x.mu_lower - ml).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((x.mu_upper - mu).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(x.mu_lower.maxCoeff() > 0.0);  // the lower limit binds somewhere
  // Primal: each coordinate is at a bound with the gradient pushing outward, or has zero gradient.
  const PrimalGradient g = primal_grad(x, prep.cost, prep.model, c);
  for (int i = 0; i < prep.net.size(); ++i) {
    const FeasibleSet& fs = prep.net.feasible()[i];
    const auto check = [](double v, double lo, double hi, double grad) {
      if (std::abs(grad) < 1e-9) return true;
      return grad > 0 ? std::abs(v - lo) < 1e-12 : std::abs(v - hi) < 1e-12;
    };
    CHECK(check(x.p(i), fs.p_min, fs.p_max, g.g_p(i)));
    CHECK(check(x.q(i), fs.q_min, fs.q_max, g.g_q(i)));
  }
}

TEST_CASE("regularization error shrinks with eta") {
  // Two-bus with a binding lower limit. Without regularization the optimum is
  // the projection of the nominal point onto A p + B q >= v_min - 1.
  const double A = 0.01, B = 0.02, s = A * A + B * B, g0 = 0.001;
  const double p_ref = -0.1 + A * g0 / s, q_ref = -0.05 + B * g0 / s;
  double prev = 0.0;
  for (double eta : {1e-4, 1e-3, 1e-2}) {
    const PreparedScenario prep = prepare_scenario(scenario(
        "two_bus", {"controller.v_min=0.999", "controller.eta=" + std::to_string(eta), "plant=linear",
                    "feedback_mode=full_exact", "controller.allow_uncertified=true"}));
    const SaddleResult sr = saddle_oracle(prep);
    const ControllerState x = ControllerState::from_stacked(sr.x);
    // Closed-form regularized saddle: mu = g0 / (eta + s / 2).
    const double mu = g0 / (eta + 0.5 * s);
    CHECK(x.mu_lower(0) == doctest::Approx(mu).epsilon(1e-9));
    CHECK(x.p(0) == doctest::Approx(-0.1 + 0.5 * A * mu).epsilon(1e-9));
    const double dist = std::hypot(x.p(0) - p_ref, x.q(0) - q_ref);
    CHECK(dist >= prev);
    prev = dist;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("exact feedback on the linear plant contracts toward the saddle") {
  const PreparedScenario prep = prepare_scenario(scenario("ieee33_contraction", {"iterations=300"}));
  const SaddleResult s = saddle_oracle(prep);
  RunOptions opt;
  opt.saddle = &s.x;
  const SimulationTrace t = run_closed_loop(prep, opt);
  const double rate = std::sqrt(prep.certificate->delta);
  for (size_t k = 1; k < t.records.size(); ++k)
    CHECK(t.records[k].dist_to_saddle <= rate * t.records[k - 1].dist_to_saddle + 1e-12);
}

TEST_CASE("run command writes hashed, reproducible outputs") {
  const ScenarioConfig cfg = scenario("two_bus");
  const auto a = scratch_dir("run_a"), b = scratch_dir("run_b");
  cmd_run(cfg, a, "two_bus");
  cmd_run(cfg, b, "two_bus");
  for (const char* f : {"trace.csv", "summary.json", "manifest.json"}) CHECK(std::filesystem::exists(a / f));
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));

  const nlohmann::json manifest = read_json(a / "manifest.json");
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["seeds"] == nlohmann::json::array({7}));
  bool saw_trace = false;
  for (const auto& f : manifest["files"]) {
    CHECK(f["sha256"].get<std::string>() == coreutils_sha256(a / f["path"].get<std::string>()));
    saw_trace = saw_trace || f["path"] == "trace.csv";
  }
  CHECK(saw_trace);

  // Header plus one row per iteration.
  std::ifstream in(a / "trace.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 201);
}

TEST_CASE("report derives plots from a run directory") {
  const auto run = scratch_dir("report_run"), out = scratch_dir("report_out");
  cmd_run(scenario("two_bus"), run, "two_bus");
  const auto files = generate_report(run, out);
  CHECK(files.size() >= 4);
  for (const char* f : {"voltage_profile.csv", "se_error_running.csv", "ci_band.csv", "cost.csv"})
    CHECK(std::filesystem::file_size(out / f) > 0);
  const auto empty = scratch_dir("report_empty");
  CHECK(error_code_of([&] { generate_report(empty, out); }) != static_cast<ErrorCode>(0));
  CHECK(error_code_of([&] { generate_report(empty / "absent", out); }) != static_cast<ErrorCode>(0));
}

TEST_CASE("formatting round-trips doubles") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) CHECK(std::stod(format_double(v)) == v);
}
