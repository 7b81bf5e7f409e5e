#ifndef MANIPULATOR_SMC_H
#define MANIPULATOR_SMC_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MsmcStatus {
  MSMC_STATUS_OK = 0,
  MSMC_STATUS_NULL_POINTER = 1,
  MSMC_STATUS_INVALID_ARGUMENT = 2,
  MSMC_STATUS_INVALID_MODEL = 3,
  MSMC_STATUS_PARSE = 4,
  MSMC_STATUS_DIMENSION_MISMATCH = 5,
  MSMC_STATUS_NUMERICAL = 6,
  MSMC_STATUS_IO = 7,
  MSMC_STATUS_DIVERGED = 8,
  MSMC_STATUS_PANIC = 9,
} MsmcStatus;

/**
 * Opaque simulation log.
 */
typedef struct MsmcLog MsmcLog;

/**
 * Opaque robot model.
 */
typedef struct MsmcModel MsmcModel;

/**
 * Opaque scenario with its reference trajectory resolved.
 */
typedef struct MsmcScenario MsmcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *msmc_last_error(void);

/**
 * Loads a model from a TOML file path or a built-in name
 * (`ur5e_like`, `pendulum1`, `planar2`).
 *
 * # Safety
 * `spec` must be a nul-terminated string and `out` a valid pointer.
 */
enum MsmcStatus msmc_model_load(const char *spec, struct MsmcModel **out);

/**
 * # Safety
 * `model` must come from [`msmc_model_load`] and not be used afterwards.
 */
void msmc_model_free(struct MsmcModel *model);

/**
 * Number of joints, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t msmc_model_dof(const struct MsmcModel *model);

/**
 * End-effector pose as `[x, y, z, roll, pitch, yaw]` (m, rad).
 *
 * # Safety
 * `q` must hold `n` values and `pose_out` room for 6.
 */
enum MsmcStatus msmc_forward_kinematics(const struct MsmcModel *model,
                                        const double *q,
                                        size_t n,
                                        double *pose_out);

/**
 * Mass matrix, Coriolis matrix (both column-major, `n * n`) and gravity
 * vector at `(q, qd)`. Any of the outputs may be null to skip it.
 *
 * # Safety
 * Inputs must hold `n` values; non-null outputs must have the sizes above.
 */
enum MsmcStatus msmc_dynamics_terms(const struct MsmcModel *model,
                                    const double *q,
                                    const double *qd,
                                    size_t n,
                                    double *mass_out,
                                    double *coriolis_out,
                                    double *gravity_out);

/**
 * Joint torques producing `qdd` at `(q, qd)`.
 *
 * # Safety
 * All arrays must hold `n` values.
 */
enum MsmcStatus msmc_inverse_dynamics(const struct MsmcModel *model,
                                      const double *q,
                                      const double *qd,
                                      const double *qdd,
                                      size_t n,
                                      double *tau_out);

/**
 * Joint accelerations under torque `tau` at `(q, qd)`.
 *
 * # Safety
 * All arrays must hold `n` values.
 */
enum MsmcStatus msmc_forward_dynamics(const struct MsmcModel *model,
                                      const double *q,
                                      const double *qd,
                                      const double *tau,
                                      size_t n,
                                      double *qdd_out);

/**
 * Model-based sliding-mode torque with the same `(p1, p2, p3)` on every
 * joint and boundary-layer width `phi`. `sigma_out` may be null.
 *
 * # Safety
 * Every array must hold `n` values.
 */
enum MsmcStatus msmc_mbsmc_torque(const struct MsmcModel *model,
                                  const double *q,
                                  const double *qd,
                                  const double *q_des,
                                  const double *qd_des,
                                  const double *qdd_des,
                                  size_t n,
                                  double p1,
                                  double p2,
                                  double p3,
                                  double phi,
                                  double *tau_out,
                                  double *sigma_out);

/**
 * Monte-Carlo reachable volume in m^3.
 *
 * # Safety
 * `volume_out` must be a valid pointer.
 */
enum MsmcStatus msmc_workspace_volume(const struct MsmcModel *model,
                                      size_t samples,
                                      double voxel_size,
                                      uint64_t seed,
                                      double *volume_out);

/**
 * Loads a scenario file; relative paths inside it resolve against its
 * directory. A null `path` loads the bundled canonical scenario.
 *
 * # Safety
 * `path` must be null or nul-terminated; `out` must be valid.
 */
enum MsmcStatus msmc_scenario_load(const char *path, struct MsmcScenario **out);

/**
 * # Safety
 * `scenario` must come from [`msmc_scenario_load`] and not be used afterwards.
 */
void msmc_scenario_free(struct MsmcScenario *scenario);

/**
 * Runs the scenario with the gains it lists for `controller`
 * (`mbsmc`, `nmbsmc`, `pid`; null for the scenario's default). A diverged
 * run still produces a log and returns [`MsmcStatus::Diverged`].
 *
 * # Safety
 * `controller` must be null or nul-terminated; `out` must be valid.
 */
enum MsmcStatus msmc_scenario_run(const struct MsmcScenario *scenario,
                                  const char *controller,
                                  struct MsmcLog **out);

/**
 * # Safety
 * `log` must come from [`msmc_scenario_run`] and not be used afterwards.
 */
void msmc_log_free(struct MsmcLog *log);

/**
 * Number of logged rows, or 0 for a null handle.
 *
 * # Safety
 * `log` must be null or a live handle.
 */
size_t msmc_log_rows(const struct MsmcLog *log);

/**
 * # Safety
 * `log` must be a live handle.
 */
enum MsmcStatus msmc_log_write_csv(const struct MsmcLog *log, const char *path);

/**
 * Per-joint RMSE, jerk and snap metrics plus total control effort.
 * Array outputs hold `n` values each; any output may be null.
 *
 * # Safety
 * Non-null outputs must have the sizes above.
 */
enum MsmcStatus msmc_log_metrics(const struct MsmcLog *log,
                                 size_t n,
                                 double *rmse_out,
                                 double *jerk_out,
                                 double *snap_out,
                                 double *effort_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MANIPULATOR_SMC_H */
