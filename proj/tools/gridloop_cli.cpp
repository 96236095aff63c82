// Command-line front end. Talks to the library only through gridloop.h.
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gridloop/gridloop.h"

namespace {

int exit_code(gl_status s) {
  if (s == GL_OK) return 0;
  return s == GL_ERR_CERTIFICATE ? 2 : 1;
}

int fail(gl_status s) {
  std::fprintf(stderr, "gridloop: %s: %s\n", gl_status_name(s), gl_last_error());
  return exit_code(s);
}

struct ScenarioArgs {
  std::string path;
  std::vector<std::string> sets;
  int trials = 0;
  long long seed = -1;
  std::string mode;
};

void add_scenario_options(CLI::App* cmd, ScenarioArgs& a, bool with_mode) {
  cmd->add_option("scenario", a.path, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", a.sets, "Override a scenario key, e.g. controller.eta=0.01 (repeatable)");
  cmd->add_option("--trials", a.trials, "Number of Monte Carlo trials")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Base noise seed (plan.seed)")->check(CLI::NonNegativeNumber);
  if (with_mode)
    cmd->add_option("--mode", a.mode, "Feedback mode")
        ->check(CLI::IsMember({"se_loop", "raw_measurements", "full_exact", "pseudo_only", "linear_model"}));
}

// Loads the scenario and applies --set, --trials, --seed and --mode in that order.
gl_status load(const ScenarioArgs& a, gl_scenario** out) {
  gl_status s = gl_scenario_load(a.path.c_str(), out);
  if (s != GL_OK) return s;
  std::vector<std::string> all = a.sets;
  if (a.trials > 0) all.push_back("trials=" + std::to_string(a.trials));
  if (a.seed >= 0) all.push_back("plan.seed=" + std::to_string(a.seed));
  if (!a.mode.empty()) all.push_back("feedback_mode=" + a.mode);
  for (const auto& kv : all)
    if ((s = gl_scenario_set(*out, kv.c_str())) != GL_OK) return s;
  return GL_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridloop: primal-dual OPF with state estimation in the loop"};
  app.set_version_flag("--version", std::string(gl_version()));
  app.require_subcommand(1);

  ScenarioArgs run_args, cert_args, cmp_args;
  std::string run_out = "out", cmp_out = "out_compare", report_dir, report_out;

  CLI::App* run = app.add_subcommand("run", "Run the closed loop and write trace, summary and manifest");
  add_scenario_options(run, run_args, true);
  run->add_option("--out", run_out, "Output directory");

  CLI::App* certify = app.add_subcommand("certify", "Print the step-size certificate");
  add_scenario_options(certify, cert_args, false);

  CLI::App* compare = app.add_subcommand("compare", "Compare se_loop against raw and pseudo-only feedback");
  add_scenario_options(compare, cmp_args, false);
  compare->add_option("--out", cmp_out, "Output directory");

  CLI::App* report = app.add_subcommand("report", "Emit plot-ready CSVs from a run directory");
  report->add_option("trace_dir", report_dir, "Directory written by 'run'")->required();
  report->add_option("--out", report_out, "Output directory (default: <trace_dir>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  gl_scenario* sc = nullptr;
  gl_status s = GL_OK;
  if (*run) {
    if ((s = load(run_args, &sc)) == GL_OK) s = gl_run(sc, run_out.c_str());
  } else if (*certify) {
    if ((s = load(cert_args, &sc)) == GL_OK) {
      gl_certificate cert{};
      s = gl_certify(sc, &cert);
      std::fputs(gl_last_output(), stdout);
    }
  } else if (*compare) {
    if ((s = load(cmp_args, &sc)) == GL_OK) s = gl_compare(sc, cmp_out.c_str());
  } else if (*report) {
    s = gl_report(report_dir.c_str(), report_out.empty() ? nullptr : report_out.c_str());
  }
  gl_scenario_free(sc);
  if (s != GL_OK) return fail(s);
  if (!*certify) std::fputs(gl_last_output(), stdout);
  return 0;
}
