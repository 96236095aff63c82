#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridloop/controller.hpp"
#include "gridloop/estimator.hpp"
#include "gridloop/linearizer.hpp"
#include "gridloop/sensing.hpp"
#include "json.hpp"

namespace gridloop {

enum class FeedbackMode { se_loop, raw_measurements, full_exact, pseudo_only, linear_model };
enum class PlantKind { nonlinear, linear };
// How the sensor-row intercept is removed before WLS: at the voltages implied
// by the pseudo-measurements, or the fixed r0 of the linear model.
enum class InterceptMode { relinearized, linear };

const char* to_string(FeedbackMode mode);
FeedbackMode feedback_mode_from_string(const std::string& name);
const char* to_string(PlantKind kind);
PlantKind plant_kind_from_string(const std::string& name);
const char* to_string(InterceptMode mode);
InterceptMode intercept_mode_from_string(const std::string& name);

struct CostConfig {
  double weight_p = 1.0;
  double weight_q = 1.0;
  double alpha = 0.0;
  std::optional<double> p0_target;  // default: lossless import at nominal
  double p0_offset = 0.0;
  bool operator==(const CostConfig&) const = default;
};

struct PlanConfig {
  std::vector<int> sensor_nodes;  // explicit placement; empty means use the fraction
  double sensor_fraction = 0.1;
  std::uint64_t placement_seed = 1;
  double sensor_sigma = 0.01;
  double pseudo_sigma = 0.5;
  double pseudo_floor = 0.01;
  double min_sigma = 1e-9;
  std::uint64_t seed = 0;
  bool pseudo_redraw = true;
  PseudoCenter pseudo_center = PseudoCenter::truth;
  bool operator==(const PlanConfig&) const = default;
};

struct EstimatorConfig {
  VoltageMode voltage_mode = VoltageMode::nonlinear;
  InterceptMode intercept = InterceptMode::relinearized;
  bool operator==(const EstimatorConfig&) const = default;
};

struct ReportConfig {
  bool compare = false;
  bool tracking_bound = false;
  bool tighten = false;
  bool saddle = false;
  bool all_trials = false;
  double confidence = 2.576;
  int burn_in = 100;
  std::vector<double> eps_scales{1.0, 0.5, 0.25};
  bool operator==(const ReportConfig&) const = default;
};

struct SyntheticConfig {
  int nodes = 0;  // 0: no synthetic feeder, load `network` instead
  std::uint64_t seed = 1;
  bool operator==(const SyntheticConfig&) const = default;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string network;  // path, relative to base_dir unless absolute
  SyntheticConfig synthetic;
  double load_scale = 1.0;
  LinearizationMethod linearization = LinearizationMethod::lindistflow;
  PlantKind plant = PlantKind::nonlinear;
  FeedbackMode feedback_mode = FeedbackMode::se_loop;
  int iterations = 1000;
  int trials = 1;
  ControllerConfig controller;
  bool allow_uncertified = false;
  CostConfig cost;
  PlanConfig plan;
  EstimatorConfig estimator;
  ReportConfig report;

  std::filesystem::path base_dir;  // not serialized

  bool operator==(const ScenarioConfig& o) const;
  std::filesystem::path network_path() const;
  void validate() const;
};

nlohmann::json scenario_to_json(const ScenarioConfig& cfg);
// Strict: unknown keys and wrong types are errors.
ScenarioConfig scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario(const std::filesystem::path& path);

// "a.b.c=value". The value is parsed as JSON when possible, else taken as a
// string. The key must already exist and keep its type.
void apply_override(nlohmann::json& doc, const std::string& assignment);
ScenarioConfig with_overrides(const ScenarioConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace gridloop
