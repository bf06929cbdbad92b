#ifndef FLEXCOORD_H
#define FLEXCOORD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FC_MODE_MONOLITHIC 0

#define FC_MODE_HIERARCHICAL 1

#define FC_MODE_BOTH 2

#define FC_SERIES_BASELINE 0

#define FC_SERIES_MONOLITHIC 1

#define FC_SERIES_PLANNED 2

#define FC_SERIES_REALIZED 3

/**
 * Result code of every fallible call.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_INPUT = 2,
  FC_STATUS_IO = 3,
  FC_STATUS_SOLVER = 4,
  FC_STATUS_INFEASIBLE = 5,
  /**
   * The quantity is not defined for this input, e.g. the aggregation
   * error of an all-zero request or a series from a scheme that did not run.
   */
  FC_STATUS_UNDEFINED = 6,
  FC_STATUS_PANIC = 7,
} FcStatus;

/**
 * The outcome of one run.
 */
typedef struct FcRunResult FcRunResult;

/**
 * A loaded scenario.
 */
typedef struct FcScenario FcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a scenario file. On success `*out` owns a new handle.
 */
enum FcStatus fc_scenario_load(const char *path, struct FcScenario **out);

/**
 * Frees a scenario handle. Null is ignored.
 */
void fc_scenario_free(struct FcScenario *scenario);

/**
 * Number of units in the scenario, or 0 for null.
 */
size_t fc_scenario_n_units(const struct FcScenario *scenario);

/**
 * Runs the scenario in one of the `FC_MODE_*` modes.
 */
enum FcStatus fc_run(const struct FcScenario *scenario, uint32_t mode, struct FcRunResult **out);

/**
 * Frees a result handle. Null is ignored.
 */
void fc_result_free(struct FcRunResult *result);

/**
 * Number of time steps of the run, or 0 for null.
 */
size_t fc_result_n_steps(const struct FcRunResult *result);

/**
 * Copies one `FC_SERIES_*` interconnection power flow series into `out`,
 * which must hold exactly `fc_result_n_steps` values.
 */
enum FcStatus fc_result_ipf(const struct FcRunResult *result,
                            uint32_t series,
                            double *out,
                            size_t len);

/**
 * Root aggregation error of a hierarchical run.
 */
enum FcStatus fc_result_epsilon(const struct FcRunResult *result, double *out);

/**
 * Aggregation efficiency of a run with both schemes.
 */
enum FcStatus fc_result_eta(const struct FcRunResult *result, double *out);

/**
 * Writes the result files into `dir`, creating it if needed.
 */
enum FcStatus fc_result_write(const struct FcScenario *scenario,
                              const struct FcRunResult *result,
                              const char *dir);

/**
 * Power-to-energy ratio of a unit with the given limits.
 */
enum FcStatus fc_pte_ratio(double p_max_mw, double capacity_mwh, double *out);

/**
 * Normalised squared mismatch of two series of length `len`.
 */
enum FcStatus fc_aggregation_error(const double *requested,
                                   const double *delivered,
                                   size_t len,
                                   double *out);

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *fc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLEXCOORD_H */
