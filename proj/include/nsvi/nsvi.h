/* C interface to the obstacle-constrained Navier-Stokes solver. */
#ifndef NSVI_H
#define NSVI_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(NSVI_BUILDING_LIBRARY)
#    define NSVI_API __declspec(dllexport)
#  else
#    define NSVI_API __declspec(dllimport)
#  endif
#else
#  define NSVI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nsvi_status {
    NSVI_OK = 0,
    NSVI_ERR_CONFIG = 1,
    NSVI_ERR_NUMERICAL = 2,
    NSVI_ERR_DOMAIN = 3,
    NSVI_ERR_IO = 4,
    NSVI_ERR_INVARIANT = 5,
    NSVI_ERR_INVALID_ARGUMENT = 6,
    NSVI_ERR_BUFFER_TOO_SMALL = 7,
    NSVI_ERR_INTERNAL = 8
} nsvi_status;

typedef enum nsvi_command_kind {
    NSVI_CMD_RUN = 0,
    NSVI_CMD_LADDER = 1,
    NSVI_CMD_VERIFY = 2,
    NSVI_CMD_CONSTANTS = 3
} nsvi_command_kind;

typedef struct nsvi_config nsvi_config;
typedef struct nsvi_trajectory nsvi_trajectory;
typedef struct nsvi_report nsvi_report;

typedef struct nsvi_sample {
    double t;
    double l2_norm;
    double h1_seminorm;
    double constraint_violation;
    int step_iters;
    double step_residual;
} nsvi_sample;

typedef struct nsvi_command_options {
    nsvi_command_kind kind;
    double index;      /* run: ladder member; <= 0 selects the largest index */
    const char* only;  /* verify: comma-separated check names, or NULL for all */
} nsvi_command_options;

/* Message of the last failing call on this thread ("" when none). */
NSVI_API const char* nsvi_last_error(void);
NSVI_API const char* nsvi_version(void);
/* Process exit code for a status: 0 ok, 1 configuration or input, 2 anything else. */
NSVI_API int nsvi_exit_code(nsvi_status status);

/* Scenario handles. Problems in the text are reported when the config is first used
 * (validate, run, command), all at once. */
NSVI_API nsvi_status nsvi_config_load(const char* path, nsvi_config** out);
NSVI_API nsvi_status nsvi_config_parse(const char* text, nsvi_config** out);
/* Dotted-key override "section.key=value". */
NSVI_API nsvi_status nsvi_config_set(nsvi_config* cfg, const char* assignment);
NSVI_API nsvi_status nsvi_config_validate(const nsvi_config* cfg);
/* Writes the canonical scenario text. *needed receives the size including the NUL. */
NSVI_API nsvi_status nsvi_config_serialize(const nsvi_config* cfg, char* buf, size_t cap, size_t* needed);
NSVI_API void nsvi_config_free(nsvi_config* cfg);

/* Single ladder member run kept in memory. */
NSVI_API nsvi_status nsvi_run(const nsvi_config* cfg, double index, nsvi_trajectory** out);
NSVI_API nsvi_status nsvi_trajectory_steps(const nsvi_trajectory* traj, int* steps);
NSVI_API nsvi_status nsvi_trajectory_sample(const nsvi_trajectory* traj, int k, nsvi_sample* out);
/* Face velocities at step k: count receives the number of faces; dofs may be NULL. */
NSVI_API nsvi_status nsvi_trajectory_velocity(const nsvi_trajectory* traj, int k, double* dofs, size_t cap,
                                              size_t* count);
NSVI_API void nsvi_trajectory_free(nsvi_trajectory* traj);

/* Runs a command and writes its files. NSVI_OK means it ran; check nsvi_report_passed. */
NSVI_API nsvi_status nsvi_command(const nsvi_config* cfg, const nsvi_command_options* opts, nsvi_report** out);
NSVI_API int nsvi_report_passed(const nsvi_report* rep);
NSVI_API const char* nsvi_report_summary(const nsvi_report* rep);
NSVI_API const char* nsvi_report_output_dir(const nsvi_report* rep);
/* Path of the first failing check's report, "" when none. */
NSVI_API const char* nsvi_report_failing_path(const nsvi_report* rep);
NSVI_API void nsvi_report_free(nsvi_report* rep);

/* Projection of (x, y) onto the closed disk of the given radius. */
NSVI_API nsvi_status nsvi_project(double x, double y, double radius, double out[2]);

#ifdef __cplusplus
}
#endif

#endif
