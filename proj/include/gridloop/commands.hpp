#pragma once

#include <filesystem>
#include <string>

#include "gridloop/controller.hpp"
#include "gridloop/scenario.hpp"

namespace gridloop {

struct CommandResult {
  std::string text;  // human-readable summary
  bool certificate_failed = false;
};

// Runs the scenario and writes trace.csv, summary.json and manifest.json
// (plus compare.csv when enabled). Throws gridloop::Error.
CommandResult cmd_run(const ScenarioConfig& cfg, const std::filesystem::path& out, const std::string& label);

// Prints M, L, eps_max and delta; certificate_failed when eps >= eps_max.
CommandResult cmd_certify(const ScenarioConfig& cfg, StepSizeCertificate* cert_out = nullptr);

// se_loop vs raw_measurements vs pseudo_only on shared seeds.
CommandResult cmd_compare(const ScenarioConfig& cfg, const std::filesystem::path& out, const std::string& label);

CommandResult cmd_report(const std::filesystem::path& trace_dir, const std::filesystem::path& out);

}  // namespace gridloop
