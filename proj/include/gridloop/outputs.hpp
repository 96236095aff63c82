#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gridloop/harness.hpp"
#include "json.hpp"

namespace gridloop {

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

void write_trace_csv(const std::filesystem::path& path, const SimulationTrace& trace, int n);
void write_comparison_csv(const std::filesystem::path& path, const ComparisonReport& rep);

nlohmann::json certificate_json(const StepSizeCertificate& cert);
nlohmann::json bound_report_json(const BoundReport& rep);
nlohmann::json comparison_json(const ComparisonReport& rep);
nlohmann::json tighten_json(const TightenReport& rep);
nlohmann::json trace_summary_json(const SimulationTrace& trace, const ControllerConfig& cfg);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);

// Written once when a run starts and rewritten with file hashes at the end.
class RunManifest {
 public:
  RunManifest(std::filesystem::path out_dir, std::string scenario, std::string command);

  void set_seeds(std::vector<std::uint64_t> seeds) { seeds_ = std::move(seeds); }
  void add_output(const std::string& relative_name) { outputs_.push_back(relative_name); }
  void write_started() const;
  void finalize(const std::string& status) const;

 private:
  nlohmann::json base() const;

  std::filesystem::path out_dir_;
  std::string scenario_;
  std::string command_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> outputs_;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point started_steady_;
};

void ensure_output_dir(const std::filesystem::path& dir);

}  // namespace gridloop
