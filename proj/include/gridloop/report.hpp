#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gridloop {

// Plot-ready CSVs from a run directory: voltage_profile.csv,
// se_error_running.csv, ci_band.csv, cost.csv and, when the run included a
// baseline comparison, se_error_by_mode.csv. Returns the files written.
std::vector<std::string> generate_report(const std::filesystem::path& trace_dir,
                                         const std::filesystem::path& out_dir);

}  // namespace gridloop
