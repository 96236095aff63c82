#include <fstream>

#include "doctest.h"
#include "gridloop/scenario.hpp"
#include "support.hpp"

using namespace gridloop;
using testing_support::error_code_of;
using testing_support::source_path;

TEST_CASE("every shipped scenario loads and round-trips") {
  for (const char* name : {"two_bus", "ieee33_contraction", "ieee33_tracking_bound", "ieee33_undervoltage", "synthetic_4000"}) {
    CAPTURE(name);
    const ScenarioConfig cfg = load_scenario(source_path(std::string("scenarios/") + name + ".json"));
    CHECK(cfg.name == name);
    const ScenarioConfig back = scenario_from_json(scenario_to_json(cfg), cfg.base_dir);
    CHECK(back == cfg);
    CHECK(scenario_to_json(back) == scenario_to_json(cfg));
  }
}

TEST_CASE("scenario fields are read as written") {
  const ScenarioConfig cfg = load_scenario(source_path("scenarios/two_bus.json"));
  CHECK(cfg.iterations == 200);
  CHECK(cfg.controller.eta == 0.1);
  CHECK(cfg.plan.sensor_nodes == std::vector<int>{1});
  CHECK(cfg.plan.seed == 7);
  CHECK(cfg.report.burn_in == 20);
  CHECK(cfg.feedback_mode == FeedbackMode::se_loop);
  CHECK(std::filesystem::exists(cfg.network_path()));
}

TEST_CASE("overrides replace typed leaves") {
  const ScenarioConfig cfg = load_scenario(source_path("scenarios/two_bus.json"));
  const ScenarioConfig o = with_overrides(cfg, {"controller.eps_primal=0.002", "iterations=50", "feedback_mode=full_exact",
                                                "plan.pseudo_redraw=false"});
  CHECK(o.controller.eps_primal == 0.002);
  CHECK(o.iterations == 50);
  CHECK(o.feedback_mode == FeedbackMode::full_exact);
  CHECK_FALSE(o.plan.pseudo_redraw);
  CHECK(o.controller.eps_dual == cfg.controller.eps_dual);
}

TEST_CASE("override errors") {
  const ScenarioConfig cfg = load_scenario(source_path("scenarios/two_bus.json"));
  CHECK(error_code_of([&] { with_overrides(cfg, {"controller.epsilon=1"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"iterations"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"iterations=fast"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"iterations=2.5"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"feedback_mode=telepathy"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"iterations=0"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"report.burn_in=500"}); }) == ErrorCode::invalid_argument);
  CHECK(error_code_of([&] { with_overrides(cfg, {"controller.v_min=1.2"}); }) == ErrorCode::invalid_argument);
}

TEST_CASE("strict parsing rejects unknown keys and bad files") {
  const auto dir = testing_support::scratch_dir("scenario_parse");
  nlohmann::json doc = scenario_to_json(load_scenario(source_path("scenarios/two_bus.json")));
  doc["network"] = source_path("networks/two_bus.json").string();

  nlohmann::json extra = doc;
  extra["controller"]["gain"] = 3;
  CHECK(error_code_of([&] { scenario_from_json(extra); }) == ErrorCode::parse);

  nlohmann::json wrong = doc;
  wrong["iterations"] = "many";
  CHECK(error_code_of([&] { scenario_from_json(wrong); }) == ErrorCode::parse);

  nlohmann::json missing = doc;
  missing["network"] = "nowhere.json";
  CHECK(error_code_of([&] { scenario_from_json(missing, dir); }) == ErrorCode::io);

  std::ofstream(dir / "broken.json") << "{ \"name\": ";
  CHECK(error_code_of([&] { load_scenario(dir / "broken.json"); }) == ErrorCode::parse);
  CHECK(error_code_of([&] { load_scenario(dir / "absent.json"); }) == ErrorCode::io);
}

TEST_CASE("enum names round trip") {
  for (auto m : {FeedbackMode::se_loop, FeedbackMode::raw_measurements, FeedbackMode::full_exact,
                 FeedbackMode::pseudo_only, FeedbackMode::linear_model})
    CHECK(feedback_mode_from_string(to_string(m)) == m);
  CHECK(plant_kind_from_string(to_string(PlantKind::linear)) == PlantKind::linear);
  CHECK(intercept_mode_from_string(to_string(InterceptMode::relinearized)) == InterceptMode::relinearized);
}
