#include "gridloop/outputs.hpp"

#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "gridloop/error.hpp"

#ifndef GRIDLOOP_VERSION
#define GRIDLOOP_VERSION "dev"
#endif

namespace gridloop {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  return out;
}

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const std::filesystem::path& path, const SimulationTrace& trace, int n) {
  std::ofstream out = open_out(path);
  const bool vectors = !trace.records.empty() && trace.records.front().v_true.size() == n;
  out << "iter";
  if (vectors)
    for (const char* prefix : {"v_true_", "v_hat_", "p_", "q_"})
      for (int id = 1; id <= n; ++id) out << ',' << prefix << id;
  out << ",mu_lower_norm,mu_upper_norm,cost_local,cost_substation,max_violation,se_err_mean,se_err_max,"
         "dist_to_saddle\n";
  std::string line;
  for (const auto& r : trace.records) {
    line = std::to_string(r.iter);
    if (vectors)
      for (const Eigen::VectorXd* v : {&r.v_true, &r.v_hat, &r.p, &r.q})
        for (int i = 0; i < n; ++i) (line += ',') += format_double((*v)[i]);
    for (double x : {r.mu_lower_norm, r.mu_upper_norm, r.cost_local, r.cost_substation, r.max_violation,
                     r.se_err_mean, r.se_err_max})
      (line += ',') += format_double(x);
    line += ',';
    if (!std::isnan(r.dist_to_saddle)) line += format_double(r.dist_to_saddle);
    line += '\n';
    out << line;
  }
  if (!out) throw Error(ErrorCode::io, "failed writing " + path.string());
}

void write_comparison_csv(const std::filesystem::path& path, const ComparisonReport& rep) {
  std::ofstream out = open_out(path);
  out << "iter";
  for (const auto& m : rep.modes) out << ",mean_" << to_string(m.mode) << ",max_" << to_string(m.mode);
  out << '\n';
  const std::size_t len = rep.modes.empty() ? 0 : rep.modes.front().running_mean_error.size();
  for (std::size_t k = 0; k < len; ++k) {
    out << rep.burn_in + static_cast<int>(k);
    for (const auto& m : rep.modes)
      out << ',' << format_double(m.running_mean_error[k]) << ',' << format_double(m.running_max_error[k]);
    out << '\n';
  }
}

nlohmann::json certificate_json(const StepSizeCertificate& c) {
  return {{"M", c.M}, {"L", c.L}, {"eps_max", c.eps_max}, {"eps", c.eps}, {"delta", c.delta}, {"certified", c.certified()}};
}

nlohmann::json bound_report_json(const BoundReport& r) {
  return {{"alpha_hat", r.alpha_hat},
          {"rho_hat", r.rho_hat},
          {"M", r.M},
          {"L", r.L},
          {"eps", r.eps},
          {"eps_max", r.eps_max},
          {"denominator", r.denominator},
          {"bound", r.bound},
          {"empirical", r.empirical},
          {"holds", r.holds()},
          {"trials", r.trials},
          {"iterations", r.iterations},
          {"tail_start", r.tail_start},
          {"expectation", r.expectation_note}};
}

nlohmann::json comparison_json(const ComparisonReport& rep) {
  nlohmann::json modes = nlohmann::json::object();
  for (const auto& m : rep.modes)
    modes[to_string(m.mode)] = {{"running_mean_error", m.final_running_mean},
                                {"running_max_error", m.final_running_max},
                                {"violations", m.violations},
                                {"final_cost", m.final_cost},
                                {"min_voltage", m.min_voltage}};
  return {{"burn_in", rep.burn_in},
          {"modes", modes},
          {"reduction_vs_raw", rep.reduction_vs_raw()},
          {"reduction_vs_pseudo", rep.reduction_vs_pseudo()}};
}

nlohmann::json tighten_json(const TightenReport& r) {
  return {{"confidence", r.confidence},         {"halfwidth_max", r.halfwidth_max},
          {"v_min_original", r.v_min_original}, {"v_min_tightened", r.v_min_tightened},
          {"base_violations", r.base_violations}, {"tight_violations", r.tight_violations},
          {"base_cost", r.base_cost},           {"tight_cost", r.tight_cost},
          {"base_min_v", r.base_min_v},         {"tight_min_v", r.tight_min_v}};
}

nlohmann::json trace_summary_json(const SimulationTrace& t, const ControllerConfig& cfg) {
  const Eigen::VectorXd& v = t.final_v;
  return {{"seed", t.seed},
          {"mode", to_string(t.mode)},
          {"iterations", t.records.size()},
          {"final_cost_local", t.final_cost_local},
          {"final_cost_substation", t.final_cost_substation},
          {"final_min_voltage", v.minCoeff()},
          {"final_max_voltage", v.maxCoeff()},
          {"final_violations", count_violations(v, cfg.v_min, cfg.v_max)},
          {"final_voltages", std::vector<double>(v.data(), v.data() + v.size())},
          {"linear_fallbacks", t.linear_fallbacks}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot hash " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

void ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(ErrorCode::io, "cannot create output directory " + dir.string());
  const auto probe = dir / ".gridloop_write_test";
  {
    std::ofstream out(probe);
    if (!out) throw Error(ErrorCode::io, "output directory is not writable: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
}

RunManifest::RunManifest(std::filesystem::path out_dir, std::string scenario, std::string command)
    : out_dir_(std::move(out_dir)),
      scenario_(std::move(scenario)),
      command_(std::move(command)),
      started_(std::chrono::system_clock::now()),
      started_steady_(std::chrono::steady_clock::now()) {}

nlohmann::json RunManifest::base() const {
  return {{"tool", "gridloop"},
          {"version", GRIDLOOP_VERSION},
          {"command", command_},
          {"scenario", scenario_},
          {"output_dir", out_dir_.string()},
          {"seeds", seeds_},
          {"started", iso_time(started_)}};
}

void RunManifest::write_started() const {
  nlohmann::json doc = base();
  doc["status"] = "running";
  write_json(out_dir_ / "manifest.json", doc);
}

void RunManifest::finalize(const std::string& status) const {
  nlohmann::json doc = base();
  doc["status"] = status;
  doc["finished"] = iso_time(std::chrono::system_clock::now());
  doc["elapsed_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_steady_).count();
  nlohmann::json files = nlohmann::json::array();
  for (const auto& name : outputs_) files.push_back({{"path", name}, {"sha256", sha256_file(out_dir_ / name)}});
  doc["files"] = files;
  write_json(out_dir_ / "manifest.json", doc);
}

}  // namespace gridloop
