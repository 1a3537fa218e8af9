#ifndef SKOROHOD_H
#define SKOROHOD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SkorohodStatus {
  SKOROHOD_STATUS_OK = 0,
  SKOROHOD_STATUS_NULL_POINTER = 1,
  SKOROHOD_STATUS_INVALID_UTF8 = 2,
  /**
   * Invalid configuration, parameters or inputs.
   */
  SKOROHOD_STATUS_CONFIG = 3,
  SKOROHOD_STATUS_TUBE_TOO_NARROW = 4,
  SKOROHOD_STATUS_NUMERIC = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  SKOROHOD_STATUS_PANIC = 6,
} SkorohodStatus;

/**
 * Outcome of an experiment.
 */
typedef enum SkorohodVerdict {
  SKOROHOD_VERDICT_PASS = 0,
  SKOROHOD_VERDICT_FAIL = 1,
  SKOROHOD_VERDICT_DEGENERATE = 2,
  SKOROHOD_VERDICT_NEAR_CRITICAL = 3,
  SKOROHOD_VERDICT_PREMISE_NOT_MET = 4,
} SkorohodVerdict;

/**
 * Opaque coefficient handle.
 */
typedef struct SkorohodCoefficients SkorohodCoefficients;

/**
 * Opaque domain handle.
 */
typedef struct SkorohodDomain SkorohodDomain;

/**
 * Opaque experiment report handle.
 */
typedef struct SkorohodReport SkorohodReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread (empty if none). The pointer
 * is valid until the next failing call on the same thread.
 */
const char *skorohod_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *skorohod_version(void);

/**
 * Builds a domain from the JSON form of a `[domain]` section, e.g.
 * `{"kind": "ball", "params": {"center": [0, 0], "radius": 1}}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkorohodStatus skorohod_domain_from_json(const char *json, struct SkorohodDomain **out);

/**
 * # Safety
 * `domain` must come from [`skorohod_domain_from_json`] and not be used afterwards.
 */
void skorohod_domain_free(struct SkorohodDomain *domain);

/**
 * Ambient dimension, or 0 for a null handle.
 *
 * # Safety
 * `domain` must be null or a live handle.
 */
size_t skorohod_domain_dim(const struct SkorohodDomain *domain);

/**
 * Nearest point of the closed domain to `y`, written to `out`; both hold
 * `dim` entries.
 *
 * # Safety
 * `domain` must be a live handle; `y` and `out` must hold `dim` doubles.
 */
enum SkorohodStatus skorohod_domain_project(const struct SkorohodDomain *domain,
                                            const double *y,
                                            size_t dim,
                                            double *out);

/**
 * Builds coefficients from the JSON form of a `[coefficients]` section,
 * e.g. `{"sigma": "sin", "base": 0.5, "slope": 0.25}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkorohodStatus skorohod_coefficients_from_json(const char *json,
                                                    struct SkorohodCoefficients **out);

/**
 * # Safety
 * `coeffs` must come from [`skorohod_coefficients_from_json`] and not be used afterwards.
 */
void skorohod_coefficients_free(struct SkorohodCoefficients *coeffs);

/**
 * Skorohod map of a piecewise-linear driver with `nodes` nodes at `times`
 * and row-major `values` (`nodes × dim`). Writes the constrained path and
 * regulator (`nodes × dim` each) and the cumulative total variation
 * (`nodes`); any output pointer may be null.
 *
 * # Safety
 * Inputs must hold the stated number of doubles; non-null outputs too.
 */
enum SkorohodStatus skorohod_solve(const struct SkorohodDomain *domain,
                                   const double *times,
                                   const double *values,
                                   size_t nodes,
                                   const double *x0,
                                   double *x_out,
                                   double *k_out,
                                   double *tv_out);

/**
 * Projected Euler scheme driven by a Brownian sample with `nodes` nodes and
 * row-major `values` (`nodes × d1`). Outputs as in [`skorohod_solve`] with
 * `d` columns.
 *
 * # Safety
 * Inputs must hold the stated number of doubles; non-null outputs too.
 */
enum SkorohodStatus skorohod_euler_reflected(const struct SkorohodDomain *domain,
                                             const struct SkorohodCoefficients *coeffs,
                                             const double *times,
                                             const double *values,
                                             size_t nodes,
                                             const double *x0,
                                             double *x_out,
                                             double *k_out,
                                             double *tv_out);

/**
 * Runs the experiment described by a TOML configuration on `workers`
 * threads (0 means one per core). The report is returned even when its
 * verdict is a failure.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SkorohodStatus skorohod_run_config(const char *config_toml,
                                        size_t workers,
                                        struct SkorohodReport **out);

/**
 * The report as JSON; owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *skorohod_report_json(const struct SkorohodReport *report);

/**
 * # Safety
 * `report` must be a live handle.
 */
enum SkorohodVerdict skorohod_report_verdict(const struct SkorohodReport *report);

/**
 * # Safety
 * `report` must come from [`skorohod_run_config`] and not be used afterwards.
 */
void skorohod_report_free(struct SkorohodReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKOROHOD_H */
