#ifndef DPOPF_H
#define DPOPF_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Algorithm selector for `dpopf_run_admm`.
 */
typedef enum DpopfAlgorithm {
  DpopfAlgorithm_Admm = 0,
  DpopfAlgorithm_SpAdmm = 1,
  DpopfAlgorithm_DpAdmm = 2,
} DpopfAlgorithm;

/**
 * Status codes returned by fallible functions.
 */
typedef enum DpopfStatus {
  DpopfStatus_Ok = 0,
  DpopfStatus_InvalidArgument = 1,
  DpopfStatus_ParseError = 2,
  DpopfStatus_SolverError = 3,
} DpopfStatus;

/**
 * Opaque network case handle.
 */
typedef struct DpopfCase DpopfCase;

/**
 * Opaque handle over a finished distributed run.
 */
typedef struct DpopfRun DpopfRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dpopf_last_error_message(void);

/**
 * Parse a case from its JSON representation; null on failure.
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string.
 */
struct DpopfCase *dpopf_case_from_json(const char *json);

/**
 * # Safety
 * `case` must come from `dpopf_case_from_json` and not be freed twice.
 */
void dpopf_case_free(struct DpopfCase *case_);

/**
 * # Safety
 * `case` must be a live handle.
 */
int dpopf_case_num_buses(const struct DpopfCase *case_);

/**
 * # Safety
 * `case` must be a live handle.
 */
int dpopf_case_num_lines(const struct DpopfCase *case_);

/**
 * # Safety
 * `case` must be a live handle.
 */
int dpopf_case_num_gens(const struct DpopfCase *case_);

/**
 * Solve the centralized OPF and write the optimal cost to `cost_out`.
 *
 * # Safety
 * `case` must be a live handle and `cost_out` a valid pointer.
 */
enum DpopfStatus dpopf_solve_centralized(const struct DpopfCase *case_, double *cost_out);

/**
 * Run a distributed algorithm over the zones given as partition JSON
 * (`{"zones": {...}}`); pass null for a single all-covering zone.
 * Returns null on failure.
 *
 * # Safety
 * `case` must be a live handle; `zones_json` must be null or a valid
 * NUL-terminated C string.
 */
struct DpopfRun *dpopf_run_admm(const struct DpopfCase *case_,
                                const char *zones_json,
                                enum DpopfAlgorithm algorithm,
                                double rho,
                                int max_iters,
                                double tol,
                                double epsilon,
                                double alpha,
                                uint64_t seed);

/**
 * # Safety
 * `run` must come from `dpopf_run_admm` and not be freed twice.
 */
void dpopf_run_free(struct DpopfRun *run);

/**
 * # Safety
 * `run` must be a live handle.
 */
int dpopf_run_iterations(const struct DpopfRun *run);

/**
 * # Safety
 * `run` must be a live handle.
 */
int dpopf_run_converged(const struct DpopfRun *run);

/**
 * # Safety
 * `run` must be a live handle.
 */
double dpopf_run_final_cost(const struct DpopfRun *run);

/**
 * Primal residual of iteration `iter` (zero-based); NaN when out of range.
 *
 * # Safety
 * `run` must be a live handle.
 */
double dpopf_run_residual(const struct DpopfRun *run, int iter);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DPOPF_H */
