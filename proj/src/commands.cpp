#include "gridloop/commands.hpp"

#include <iomanip>
#include <sstream>

#include "gridloop/error.hpp"
#include "gridloop/harness.hpp"
#include "gridloop/outputs.hpp"
#include "gridloop/report.hpp"

namespace gridloop {

namespace {

// Largest network for which the dense voltage confidence band is reported.
constexpr int kCiBandLimit = 2000;

std::vector<std::uint64_t> trial_seeds(const ScenarioConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (int t = 0; t < cfg.trials; ++t) seeds.push_back(cfg.plan.seed + static_cast<std::uint64_t>(t));
  return seeds;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

ScenarioConfig scaled_steps(const ScenarioConfig& cfg, double s) {
  ScenarioConfig out = cfg;
  out.controller.eps_primal *= s;
  out.controller.eps_dual *= s;
  return out;
}

}  // namespace

CommandResult cmd_certify(const ScenarioConfig& cfg, StepSizeCertificate* cert_out) {
  ScenarioConfig relaxed = cfg;
  relaxed.allow_uncertified = true;
  const PreparedScenario prep = prepare_scenario(relaxed);
  const StepSizeCertificate cert = certify(prep);
  if (cert_out) *cert_out = cert;
  std::ostringstream os;
  os << std::setprecision(10);
  os << "M        " << cert.M << '\n'
     << "L        " << cert.L << '\n'
     << "eps_max  " << cert.eps_max << '\n'
     << "eps      " << cert.eps << '\n'
     << "delta    " << cert.delta << '\n'
     << "status   " << (cert.certified() ? "certified" : "NOT certified: eps >= eps_max") << '\n';
  return {os.str(), !cert.certified()};
}

CommandResult cmd_run(const ScenarioConfig& cfg, const std::filesystem::path& out, const std::string& label) {
  ensure_output_dir(out);
  RunManifest manifest(out, label, "run");
  manifest.set_seeds(trial_seeds(cfg));
  manifest.write_started();

  try {
    const PreparedScenario prep = prepare_scenario(cfg);
    const int n = prep.net.size();
    nlohmann::json summary;
    summary["scenario"] = scenario_to_json(cfg);
    summary["network"] = {{"nodes", n}, {"depth", prep.net.depth()}};
    summary["sensor_nodes"] = prep.plan.sensor_nodes;
    if (prep.certificate) summary["certificate"] = certificate_json(*prep.certificate);
    else summary["certificate"] = nullptr;

    std::optional<SaddleResult> saddle;
    if (cfg.report.saddle || cfg.report.tracking_bound) {
      saddle = saddle_oracle(prep);
      summary["saddle"] = {{"iterations", saddle->iterations},
                           {"fixed_point_residual", saddle->step_norm},
                           {"eps", saddle->eps},
                           {"polished", saddle->polished}};
    }

    // Trial 0 keeps per-node vectors for the trace; the rest only scalars.
    std::vector<SimulationTrace> traces(cfg.trials);
    parallel_for(cfg.trials, [&](int t) {
      RunOptions opt;
      opt.seed = cfg.plan.seed + static_cast<std::uint64_t>(t);
      opt.keep_vectors = t == 0 || cfg.report.all_trials;
      if (cfg.report.saddle) opt.saddle = &saddle->x;
      traces[t] = run_closed_loop(prep, opt);
    });
    write_trace_csv(out / "trace.csv", traces[0], n);
    manifest.add_output("trace.csv");
    if (cfg.report.all_trials)
      for (int t = 1; t < cfg.trials; ++t) {
        const std::string name = "trace_trial" + std::to_string(t) + ".csv";
        write_trace_csv(out / name, traces[t], n);
        manifest.add_output(name);
      }

    nlohmann::json trials = nlohmann::json::array();
    double cost_sum = 0.0;
    int worst = 0;
    for (const auto& tr : traces) {
      trials.push_back(trace_summary_json(tr, cfg.controller));
      cost_sum += tr.final_cost();
      worst = std::max(worst, count_violations(tr.final_v, cfg.controller.v_min, cfg.controller.v_max));
    }
    summary["trials"] = trials;
    summary["aggregate"] = {{"mean_final_cost", cost_sum / cfg.trials}, {"max_final_violations", worst}};
    if (n <= kCiBandLimit) {
      const Eigen::VectorXd hw = voltage_halfwidths(prep, cfg.report.confidence);
      summary["voltage_ci_halfwidth"] = std::vector<double>(hw.data(), hw.data() + hw.size());
    }

    std::ostringstream os;
    const auto& t0 = traces[0];
    os << "scenario      " << cfg.name << " (" << n << " nodes, " << cfg.iterations << " iterations, " << cfg.trials
       << " trial" << (cfg.trials == 1 ? "" : "s") << ", mode " << to_string(cfg.feedback_mode) << ")\n";
    if (prep.certificate)
      os << "certificate   eps " << fmt(prep.certificate->eps) << " < eps_max " << fmt(prep.certificate->eps_max) << '\n';
    else
      os << "certificate   waived (controller.allow_uncertified)\n";
    os << "final voltage min " << fmt(t0.final_v.minCoeff()) << ", max " << fmt(t0.final_v.maxCoeff())
       << ", violations " << count_violations(t0.final_v, cfg.controller.v_min, cfg.controller.v_max) << '\n';
    os << "final cost    " << fmt(t0.final_cost()) << '\n';

    if (cfg.report.compare) {
      const ComparisonReport rep = run_baseline_comparison(prep);
      write_comparison_csv(out / "compare.csv", rep);
      manifest.add_output("compare.csv");
      summary["comparison"] = comparison_json(rep);
      os << "comparison    running-average mean error se_loop " << fmt(rep.get(FeedbackMode::se_loop).final_running_mean)
         << ", raw " << fmt(rep.get(FeedbackMode::raw_measurements).final_running_mean) << ", pseudo_only "
         << fmt(rep.get(FeedbackMode::pseudo_only).final_running_mean) << " (reduction vs raw "
         << fmt(100.0 * rep.reduction_vs_raw()) << "%)\n";
    }
    if (cfg.report.tracking_bound) {
      nlohmann::json reports = nlohmann::json::array();
      for (double s : cfg.report.eps_scales) {
        const PreparedScenario scaled = reconfigure(prep, scaled_steps(cfg, s));
        const BoundReport rep = verify_tracking_bound(scaled, saddle->x, cfg.trials);
        nlohmann::json j = bound_report_json(rep);
        j["eps_scale"] = s;
        reports.push_back(j);
        os << "bound         eps " << fmt(rep.eps) << ": empirical " << fmt(rep.empirical) << " <= bound "
           << fmt(rep.bound) << (rep.holds() ? "  ok" : "  VIOLATED") << '\n';
      }
      summary["tracking_bound"] = reports;
    }
    if (cfg.report.tighten) {
      const TightenReport rep = tightened_bound_experiment(prep, cfg.report.confidence);
      summary["tighten"] = tighten_json(rep);
      os << "tightened     v_min " << fmt(rep.v_min_original) << " -> " << fmt(rep.v_min_tightened)
         << ": violations " << rep.base_violations << " -> " << rep.tight_violations << ", cost "
         << fmt(rep.base_cost) << " -> " << fmt(rep.tight_cost) << '\n';
    }

    write_json(out / "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.finalize("ok");
    os << "outputs       " << out.string() << '\n';
    return {os.str(), false};
  } catch (const Error& e) {
    manifest.finalize(e.code() == ErrorCode::certificate ? "certificate_failed" : "error");
    throw;
  } catch (...) {
    manifest.finalize("error");
    throw;
  }
}

CommandResult cmd_compare(const ScenarioConfig& cfg, const std::filesystem::path& out, const std::string& label) {
  ensure_output_dir(out);
  RunManifest manifest(out, label, "compare");
  manifest.set_seeds({cfg.plan.seed});
  manifest.write_started();
  try {
    const PreparedScenario prep = prepare_scenario(cfg);
    const ComparisonReport rep = run_baseline_comparison(prep);
    write_comparison_csv(out / "compare.csv", rep);
    manifest.add_output("compare.csv");
    nlohmann::json summary;
    summary["scenario"] = scenario_to_json(cfg);
    summary["comparison"] = comparison_json(rep);
    write_json(out / "summary.json", summary);
    manifest.add_output("summary.json");
    manifest.finalize("ok");
    std::ostringstream os;
    os << "running-average voltage estimation error after " << rep.burn_in << " burn-in iterations\n";
    for (const auto& m : rep.modes)
      os << "  " << std::left << std::setw(18) << to_string(m.mode) << " mean " << fmt(m.final_running_mean)
         << "  max " << fmt(m.final_running_max) << "  final violations " << m.violations << '\n';
    os << "se_loop reduction vs raw_measurements " << fmt(100.0 * rep.reduction_vs_raw()) << "%, vs pseudo_only "
       << fmt(100.0 * rep.reduction_vs_pseudo()) << "%\n";
    return {os.str(), false};
  } catch (...) {
    manifest.finalize("error");
    throw;
  }
}

CommandResult cmd_report(const std::filesystem::path& trace_dir, const std::filesystem::path& out) {
  const auto files = generate_report(trace_dir, out);
  std::ostringstream os;
  for (const auto& f : files) os << (out / f).string() << '\n';
  return {os.str(), false};
}

}  // namespace gridloop
