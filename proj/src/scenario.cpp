#include "gridloop/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "gridloop/error.hpp"

namespace gridloop {

namespace {

using nlohmann::json;

template <class Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<FeedbackMode> kFeedbackNames[] = {{FeedbackMode::se_loop, "se_loop"},
                                                      {FeedbackMode::raw_measurements, "raw_measurements"},
                                                      {FeedbackMode::full_exact, "full_exact"},
                                                      {FeedbackMode::pseudo_only, "pseudo_only"},
                                                      {FeedbackMode::linear_model, "linear_model"}};

template <class Enum, std::size_t K>
Enum parse_enum(const EnumName<Enum> (&table)[K], const std::string& name, const char* what) {
  for (const auto& e : table)
    if (name == e.name) return e.value;
  std::string choices;
  for (const auto& e : table) choices += std::string(choices.empty() ? "" : "|") + e.name;
  throw Error(ErrorCode::invalid_argument, std::string("unknown ") + what + " '" + name + "' (expected " + choices + ")");
}

// Reads members of one JSON object and rejects anything it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj.is_object()) throw Error(ErrorCode::parse, where("") + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      check_type<T>(*it, key);
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse, where(key) + ": " + e.what());
    }
  }

  void read_optional(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    if (!it->is_number()) throw Error(ErrorCode::parse, where(key) + ": expected a number or null");
    out = it->get<double>();
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "scenario" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) throw Error(ErrorCode::parse, "unknown scenario key '" + where(it.key()) + "'");
  }

 private:
  template <class T>
  void check_type(const json& v, const char* key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_same_v<T, std::string>)
      ok = v.is_string();
    else if constexpr (std::is_integral_v<T>)
      ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<long long>() >= 0);
    else if constexpr (std::is_floating_point_v<T>)
      ok = v.is_number();
    else
      ok = v.is_array();
    if (!ok) throw Error(ErrorCode::parse, where(key) + ": type mismatch (got " + v.type_name() + ")");
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

const char* to_string(FeedbackMode mode) {
  for (const auto& e : kFeedbackNames)
    if (e.value == mode) return e.name;
  return "se_loop";
}

FeedbackMode feedback_mode_from_string(const std::string& name) {
  return parse_enum(kFeedbackNames, name, "feedback mode");
}

const char* to_string(PlantKind kind) { return kind == PlantKind::linear ? "linear" : "nonlinear"; }

PlantKind plant_kind_from_string(const std::string& name) {
  static constexpr EnumName<PlantKind> table[] = {{PlantKind::nonlinear, "nonlinear"}, {PlantKind::linear, "linear"}};
  return parse_enum(table, name, "plant");
}

const char* to_string(InterceptMode mode) { return mode == InterceptMode::linear ? "linear" : "relinearized"; }

InterceptMode intercept_mode_from_string(const std::string& name) {
  static constexpr EnumName<InterceptMode> table[] = {{InterceptMode::relinearized, "relinearized"},
                                                      {InterceptMode::linear, "linear"}};
  return parse_enum(table, name, "intercept mode");
}

bool ScenarioConfig::operator==(const ScenarioConfig& o) const {
  return name == o.name && network == o.network && synthetic == o.synthetic && load_scale == o.load_scale &&
         linearization == o.linearization && plant == o.plant && feedback_mode == o.feedback_mode &&
         iterations == o.iterations && trials == o.trials && controller == o.controller &&
         allow_uncertified == o.allow_uncertified && cost == o.cost && plan == o.plan && estimator == o.estimator &&
         report == o.report;
}

std::filesystem::path ScenarioConfig::network_path() const {
  std::filesystem::path p(network);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

void ScenarioConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
  if (trials < 1) throw Error(ErrorCode::invalid_argument, "trials must be >= 1");
  if (synthetic.nodes < 0) throw Error(ErrorCode::invalid_argument, "synthetic.nodes must be >= 0");
  if (synthetic.nodes == 0 && network.empty())
    throw Error(ErrorCode::invalid_argument, "scenario needs a network path or synthetic.nodes > 0");
  if (synthetic.nodes == 0 && !std::filesystem::exists(network_path()))
    throw Error(ErrorCode::io, "network file not found: " + network_path().string());
  if (!(load_scale > 0.0)) throw Error(ErrorCode::invalid_argument, "load_scale must be positive");
  controller.validate();
  if (!(cost.weight_p > 0.0) || !(cost.weight_q > 0.0))
    throw Error(ErrorCode::invalid_argument, "cost weights must be positive");
  if (!(cost.alpha >= 0.0)) throw Error(ErrorCode::invalid_argument, "cost.alpha must be >= 0");
  if (!(report.confidence >= 0.0)) throw Error(ErrorCode::invalid_argument, "report.confidence must be >= 0");
  if (report.burn_in < 0 || report.burn_in >= iterations)
    throw Error(ErrorCode::invalid_argument, "report.burn_in must lie in [0, iterations)");
  for (double s : report.eps_scales)
    if (!(s > 0.0)) throw Error(ErrorCode::invalid_argument, "report.eps_scales must be positive");
}

nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  json doc;
  doc["name"] = c.name;
  doc["network"] = c.network;
  doc["synthetic"] = {{"nodes", c.synthetic.nodes}, {"seed", c.synthetic.seed}};
  doc["load_scale"] = c.load_scale;
  doc["linearization"] = to_string(c.linearization);
  doc["plant"] = to_string(c.plant);
  doc["feedback_mode"] = to_string(c.feedback_mode);
  doc["iterations"] = c.iterations;
  doc["trials"] = c.trials;
  doc["controller"] = {{"eps_primal", c.controller.eps_primal}, {"eps_dual", c.controller.eps_dual},
                       {"eta", c.controller.eta},               {"v_min", c.controller.v_min},
                       {"v_max", c.controller.v_max},           {"allow_uncertified", c.allow_uncertified}};
  doc["cost"] = {{"weight_p", c.cost.weight_p},
                 {"weight_q", c.cost.weight_q},
                 {"alpha", c.cost.alpha},
                 {"p0_target", optional_json(c.cost.p0_target)},
                 {"p0_offset", c.cost.p0_offset}};
  doc["plan"] = {{"sensor_nodes", c.plan.sensor_nodes},
                 {"sensor_fraction", c.plan.sensor_fraction},
                 {"placement_seed", c.plan.placement_seed},
                 {"sensor_sigma", c.plan.sensor_sigma},
                 {"pseudo_sigma", c.plan.pseudo_sigma},
                 {"pseudo_floor", c.plan.pseudo_floor},
                 {"min_sigma", c.plan.min_sigma},
                 {"seed", c.plan.seed},
                 {"pseudo_redraw", c.plan.pseudo_redraw},
                 {"pseudo_center", to_string(c.plan.pseudo_center)}};
  doc["estimator"] = {{"voltage_mode", to_string(c.estimator.voltage_mode)},
                      {"intercept", to_string(c.estimator.intercept)}};
  doc["report"] = {{"compare", c.report.compare},       {"tracking_bound", c.report.tracking_bound},
                   {"tighten", c.report.tighten},       {"saddle", c.report.saddle},
                   {"all_trials", c.report.all_trials}, {"confidence", c.report.confidence},
                   {"burn_in", c.report.burn_in},       {"eps_scales", c.report.eps_scales}};
  return doc;
}

ScenarioConfig scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  ScenarioConfig c;
  c.base_dir = base_dir;
  ObjectReader top(doc, "");
  std::string text;
  top.read("name", c.name);
  top.read("network", c.network);
  if (const json* s = top.child("synthetic")) {
    ObjectReader r(*s, "synthetic");
    r.read("nodes", c.synthetic.nodes);
    r.read("seed", c.synthetic.seed);
    r.finish();
  }
  top.read("load_scale", c.load_scale);
  text = to_string(c.linearization);
  top.read("linearization", text);
  c.linearization = linearization_from_string(text);
  text = to_string(c.plant);
  top.read("plant", text);
  c.plant = plant_kind_from_string(text);
  text = to_string(c.feedback_mode);
  top.read("feedback_mode", text);
  c.feedback_mode = feedback_mode_from_string(text);
  top.read("iterations", c.iterations);
  top.read("trials", c.trials);
  if (const json* s = top.child("controller")) {
    ObjectReader r(*s, "controller");
    r.read("eps_primal", c.controller.eps_primal);
    r.read("eps_dual", c.controller.eps_dual);
    r.read("eta", c.controller.eta);
    r.read("v_min", c.controller.v_min);
    r.read("v_max", c.controller.v_max);
    r.read("allow_uncertified", c.allow_uncertified);
    r.finish();
  }
  if (const json* s = top.child("cost")) {
    ObjectReader r(*s, "cost");
    r.read("weight_p", c.cost.weight_p);
    r.read("weight_q", c.cost.weight_q);
    r.read("alpha", c.cost.alpha);
    r.read_optional("p0_target", c.cost.p0_target);
    r.read("p0_offset", c.cost.p0_offset);
    r.finish();
  }
  if (const json* s = top.child("plan")) {
    ObjectReader r(*s, "plan");
    r.read("sensor_nodes", c.plan.sensor_nodes);
    r.read("sensor_fraction", c.plan.sensor_fraction);
    r.read("placement_seed", c.plan.placement_seed);
    r.read("sensor_sigma", c.plan.sensor_sigma);
    r.read("pseudo_sigma", c.plan.pseudo_sigma);
    r.read("pseudo_floor", c.plan.pseudo_floor);
    r.read("min_sigma", c.plan.min_sigma);
    r.read("seed", c.plan.seed);
    r.read("pseudo_redraw", c.plan.pseudo_redraw);
    text = to_string(c.plan.pseudo_center);
    r.read("pseudo_center", text);
    c.plan.pseudo_center = pseudo_center_from_string(text);
    r.finish();
  }
  if (const json* s = top.child("estimator")) {
    ObjectReader r(*s, "estimator");
    text = to_string(c.estimator.voltage_mode);
    r.read("voltage_mode", text);
    c.estimator.voltage_mode = voltage_mode_from_string(text);
    text = to_string(c.estimator.intercept);
    r.read("intercept", text);
    c.estimator.intercept = intercept_mode_from_string(text);
    r.finish();
  }
  if (const json* s = top.child("report")) {
    ObjectReader r(*s, "report");
    r.read("compare", c.report.compare);
    r.read("tracking_bound", c.report.tracking_bound);
    r.read("tighten", c.report.tighten);
    r.read("saddle", c.report.saddle);
    r.read("all_trials", c.report.all_trials);
    r.read("confidence", c.report.confidence);
    r.read("burn_in", c.report.burn_in);
    r.read("eps_scales", c.report.eps_scales);
    r.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open scenario " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  return scenario_from_json(doc, path.parent_path());
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::invalid_argument, "override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json* node = &doc;
  std::stringstream path(key);
  std::string part;
  while (std::getline(path, part, '.')) {
    if (!node->is_object() || !node->contains(part))
      throw Error(ErrorCode::invalid_argument, "unknown scenario key '" + key + "'");
    node = &(*node)[part];
  }
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  const bool number_ok = node->is_number_float() ? value.is_number()
                         : node->is_number()     ? value.is_number_integer()
                                                 : false;
  const bool ok = node->is_null() ? (value.is_null() || value.is_number())
                  : node->is_number() ? number_ok
                  : node->is_string() ? (value.is_string() || (value = text, true))
                                      : node->type() == value.type();
  if (!ok)
    throw Error(ErrorCode::invalid_argument, "type mismatch for '" + key + "': expected " + node->type_name() +
                                                 ", got " + value.type_name());
  if (node->is_number_float() && value.is_number()) value = value.get<double>();
  *node = value;
}

ScenarioConfig with_overrides(const ScenarioConfig& cfg, const std::vector<std::string>& assignments) {
  if (assignments.empty()) return cfg;
  json doc = scenario_to_json(cfg);
  for (const auto& a : assignments) apply_override(doc, a);
  return scenario_from_json(doc, cfg.base_dir);
}

}  // namespace gridloop
