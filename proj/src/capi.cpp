#include "gridloop/gridloop.h"

#include <cstring>
#include <iomanip>
#include <sstream>
#include <string>

#include "gridloop/commands.hpp"
#include "gridloop/error.hpp"
#include "gridloop/netmodel.hpp"
#include "gridloop/plant.hpp"
#include "gridloop/scenario.hpp"

#ifndef GRIDLOOP_VERSION
#define GRIDLOOP_VERSION "dev"
#endif

struct gl_network {
  gridloop::NetworkModel net;
};

struct gl_scenario {
  gridloop::ScenarioConfig cfg;
  std::string path;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_output;

gl_status to_status(gridloop::ErrorCode code) {
  using gridloop::ErrorCode;
  switch (code) {
    case ErrorCode::io: return GL_ERR_IO;
    case ErrorCode::parse: return GL_ERR_PARSE;
    case ErrorCode::invalid_argument: return GL_ERR_INVALID_ARGUMENT;
    case ErrorCode::topology: return GL_ERR_TOPOLOGY;
    case ErrorCode::convergence: return GL_ERR_CONVERGENCE;
    case ErrorCode::certificate: return GL_ERR_CERTIFICATE;
    case ErrorCode::observability: return GL_ERR_OBSERVABILITY;
    case ErrorCode::dimension: return GL_ERR_DIMENSION;
  }
  return GL_ERR_INTERNAL;
}

template <class F>
gl_status guarded(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const gridloop::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return GL_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return GL_ERR_INTERNAL;
  }
}

gl_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return GL_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* gl_last_error(void) { return last_error.c_str(); }
const char* gl_last_output(void) { return last_output.c_str(); }
const char* gl_version(void) { return GRIDLOOP_VERSION; }

const char* gl_status_name(gl_status status) {
  switch (status) {
    case GL_OK: return "ok";
    case GL_ERR_IO: return "io error";
    case GL_ERR_PARSE: return "parse error";
    case GL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case GL_ERR_TOPOLOGY: return "topology error";
    case GL_ERR_CONVERGENCE: return "convergence failure";
    case GL_ERR_CERTIFICATE: return "step-size certificate failure";
    case GL_ERR_OBSERVABILITY: return "observability failure";
    case GL_ERR_DIMENSION: return "dimension mismatch";
    case GL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

gl_status gl_network_load(const char* path, gl_network** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new gl_network{gridloop::load_network(path)};
    return GL_OK;
  });
}

int gl_network_size(const gl_network* net) { return net ? net->net.size() : -1; }
int gl_network_depth(const gl_network* net) { return net ? net->net.depth() : -1; }

gl_status gl_network_power_flow(const gl_network* net, const double* p, const double* q, double* v_out, size_t n) {
  if (!net) return null_argument("net");
  if (!p || !q || !v_out) return null_argument("p/q/v_out");
  return guarded([&] {
    if (n != static_cast<size_t>(net->net.size()))
      throw gridloop::Error(gridloop::ErrorCode::dimension, "expected " + std::to_string(net->net.size()) + " nodes");
    const Eigen::Index len = static_cast<Eigen::Index>(n);
    const auto sol = gridloop::solve_power_flow(net->net, Eigen::Map<const Eigen::VectorXd>(p, len),
                                                Eigen::Map<const Eigen::VectorXd>(q, len));
    const Eigen::VectorXd v = gridloop::true_quantities(sol);
    std::memcpy(v_out, v.data(), n * sizeof(double));
    return GL_OK;
  });
}

void gl_network_free(gl_network* net) { delete net; }

gl_status gl_scenario_load(const char* path, gl_scenario** out) {
  if (!path) return null_argument("path");
  if (!out) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new gl_scenario{gridloop::load_scenario(path), path};
    return GL_OK;
  });
}

gl_status gl_scenario_set(gl_scenario* scenario, const char* assignment) {
  if (!scenario) return null_argument("scenario");
  if (!assignment) return null_argument("assignment");
  return guarded([&] {
    scenario->cfg = gridloop::with_overrides(scenario->cfg, {assignment});
    return GL_OK;
  });
}

size_t gl_scenario_json(const gl_scenario* scenario, char* buf, size_t cap) {
  if (!scenario) return 0;
  const std::string text = gridloop::scenario_to_json(scenario->cfg).dump(2);
  if (buf && cap > 0) {
    const size_t len = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), len);
    buf[len] = '\0';
  }
  return text.size();
}

void gl_scenario_free(gl_scenario* scenario) { delete scenario; }

gl_status gl_run(const gl_scenario* scenario, const char* out_dir) {
  if (!scenario) return null_argument("scenario");
  if (!out_dir) return null_argument("out_dir");
  return guarded([&] {
    last_output = gridloop::cmd_run(scenario->cfg, out_dir, scenario->path).text;
    return GL_OK;
  });
}

gl_status gl_certify(const gl_scenario* scenario, gl_certificate* out) {
  if (!scenario) return null_argument("scenario");
  return guarded([&] {
    gridloop::StepSizeCertificate cert;
    const auto res = gridloop::cmd_certify(scenario->cfg, &cert);
    last_output = res.text;
    if (out) *out = {cert.M, cert.L, cert.eps_max, cert.eps, cert.delta, cert.certified() ? 1 : 0};
    if (res.certificate_failed) {
      std::ostringstream os;
      os << std::setprecision(6) << "configured eps = " << cert.eps << " is not below eps_max = " << cert.eps_max;
      last_error = os.str();
      return GL_ERR_CERTIFICATE;
    }
    return GL_OK;
  });
}

gl_status gl_compare(const gl_scenario* scenario, const char* out_dir) {
  if (!scenario) return null_argument("scenario");
  if (!out_dir) return null_argument("out_dir");
  return guarded([&] {
    last_output = gridloop::cmd_compare(scenario->cfg, out_dir, scenario->path).text;
    return GL_OK;
  });
}

gl_status gl_report(const char* trace_dir, const char* out_dir) {
  if (!trace_dir) return null_argument("trace_dir");
  return guarded([&] {
    const std::filesystem::path out = out_dir ? std::filesystem::path(out_dir) : std::filesystem::path(trace_dir) / "report";
    last_output = gridloop::cmd_report(trace_dir, out).text;
    return GL_OK;
  });
}

}  // extern "C"
