#ifndef PROXMETRIC_H
#define PROXMETRIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_SHAPE = 3,
  PM_STATUS_NUMERIC = 4,
  PM_STATUS_IO = 5,
  PM_STATUS_CHECKPOINT = 6,
  PM_STATUS_PANIC = 7,
} PmStatus;

/**
 * Solver selector.
 */
typedef enum PmAlgorithm {
  PM_ALGORITHM_DR = 0,
  PM_ALGORITHM_ADMM = 1,
} PmAlgorithm;

/**
 * A trained network with optional metric head bounds.
 */
typedef struct PmModel PmModel;

/**
 * A quadratic program and its slack reformulation.
 */
typedef struct PmProblem PmProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t pm_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pm_version(void);

/**
 * Translated-box toy problem for parameters `(p1, p2)`.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum PmStatus pm_problem_toy(double p1, double p2, struct PmProblem **out);

/**
 * Mean-variance allocation over `n` assets with row-major covariance
 * `sigma` (n×n), expected returns `mu` (n) and the given budget.
 *
 * # Safety
 * `sigma` must hold n·n values, `mu` n values, `out` must be writable.
 */
enum PmStatus pm_problem_portfolio(size_t n,
                                   const double *sigma,
                                   const double *mu,
                                   double budget,
                                   struct PmProblem **out);

/**
 * Benchmark quadcopter tracking problem with the given horizon and the
 * 12-dimensional initial state `x0`.
 *
 * # Safety
 * `x0` must hold 12 values, `out` must be writable.
 */
enum PmStatus pm_problem_quadcopter(size_t horizon, const double *x0, struct PmProblem **out);

/**
 * Writes the original variable count `n`, equality and inequality counts,
 * and the reformulated dimension `d = n + k_in`. Any output may be null.
 *
 * # Safety
 * `problem` must come from a `pm_problem_*` constructor.
 */
enum PmStatus pm_problem_dims(const struct PmProblem *problem,
                              size_t *n,
                              size_t *m_eq,
                              size_t *k_in,
                              size_t *d);

/**
 * # Safety
 * `problem` must be null or come from a `pm_problem_*` constructor, and not
 * be used afterwards.
 */
void pm_problem_free(struct PmProblem *problem);

/**
 * Runs `iterations` steps of DR or ADMM and writes the final original-space
 * iterate to `x_out` (n values).
 *
 * `metric_m` (d values) and `rho` give `M = diag(ρ·m)`; a null `metric_m`
 * selects the Euclidean metric. `x0` (n values) is the start for the
 * original variables; null starts from zero. Slacks always start at zero.
 *
 * # Safety
 * Pointers must be null or valid for the stated lengths.
 */
enum PmStatus pm_solve(const struct PmProblem *problem,
                       enum PmAlgorithm algorithm,
                       size_t iterations,
                       double gamma,
                       const double *metric_m,
                       double rho,
                       const double *x0,
                       double *x_out);

/**
 * Exact solution by active-set enumeration (at most 25 inequalities);
 * writes n values to `x_out`.
 *
 * # Safety
 * `x_out` must be valid for n values.
 */
enum PmStatus pm_oracle_solve(const struct PmProblem *problem, double *x_out);

/**
 * Loads a checkpoint written by the `proxmetric` tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `out` must be writable.
 */
enum PmStatus pm_model_load(const char *path, struct PmModel **out);

/**
 * Input and output widths of the network.
 *
 * # Safety
 * `model` must come from `pm_model_load`; outputs may be null.
 */
enum PmStatus pm_model_dims(const struct PmModel *model, size_t *input, size_t *output);

/**
 * Raw network output for parameters `p` (`p_len` values) into `out`
 * (`out_len` values, must equal the output width).
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum PmStatus pm_model_forward(const struct PmModel *model,
                               const double *p,
                               size_t p_len,
                               double *out,
                               size_t out_len);

/**
 * Predicts the metric for parameters `p`: `d` weights into `m_out` and the
 * scale into `rho_out`. Fails for models saved without head bounds.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum PmStatus pm_model_predict_metric(const struct PmModel *model,
                                      const double *p,
                                      size_t p_len,
                                      size_t d,
                                      double *m_out,
                                      double *rho_out);

/**
 * # Safety
 * `model` must be null or come from `pm_model_load`, and not be used
 * afterwards.
 */
void pm_model_free(struct PmModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROXMETRIC_H */
