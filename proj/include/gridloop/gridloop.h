#ifndef GRIDLOOP_GRIDLOOP_H
#define GRIDLOOP_GRIDLOOP_H

#include <stddef.h>

#if defined(_WIN32)
#define GL_API __declspec(dllexport)
#else
#define GL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gl_status {
  GL_OK = 0,
  GL_ERR_IO = 1,
  GL_ERR_PARSE = 2,
  GL_ERR_INVALID_ARGUMENT = 3,
  GL_ERR_TOPOLOGY = 4,
  GL_ERR_CONVERGENCE = 5,
  GL_ERR_CERTIFICATE = 6,
  GL_ERR_OBSERVABILITY = 7,
  GL_ERR_DIMENSION = 8,
  GL_ERR_INTERNAL = 9
} gl_status;

typedef struct gl_network gl_network;
typedef struct gl_scenario gl_scenario;

typedef struct gl_certificate {
  double M;
  double L;
  double eps_max;
  double eps;
  double delta;
  int certified;
} gl_certificate;

/* Message of the last failing call on this thread ("" when none). */
GL_API const char* gl_last_error(void);
/* Printable result of the last successful command on this thread. */
GL_API const char* gl_last_output(void);
GL_API const char* gl_version(void);
GL_API const char* gl_status_name(gl_status status);

GL_API gl_status gl_network_load(const char* path, gl_network** out);
GL_API int gl_network_size(const gl_network* net);
GL_API int gl_network_depth(const gl_network* net);
/* Solves the plant at injections p, q (length N); writes |v| into v_out. */
GL_API gl_status gl_network_power_flow(const gl_network* net, const double* p, const double* q, double* v_out,
                                       size_t n);
GL_API void gl_network_free(gl_network* net);

GL_API gl_status gl_scenario_load(const char* path, gl_scenario** out);
/* Dotted-path override, e.g. "controller.eta=0.01". */
GL_API gl_status gl_scenario_set(gl_scenario* scenario, const char* assignment);
/* Writes the resolved scenario as JSON into buf (NUL-terminated, truncated to cap). Returns the full length. */
GL_API size_t gl_scenario_json(const gl_scenario* scenario, char* buf, size_t cap);
GL_API void gl_scenario_free(gl_scenario* scenario);

GL_API gl_status gl_run(const gl_scenario* scenario, const char* out_dir);
GL_API gl_status gl_certify(const gl_scenario* scenario, gl_certificate* out);
GL_API gl_status gl_compare(const gl_scenario* scenario, const char* out_dir);
GL_API gl_status gl_report(const char* trace_dir, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif
