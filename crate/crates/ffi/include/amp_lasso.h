#ifndef AMP_LASSO_H
#define AMP_LASSO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmpStatus {
  AMP_STATUS_OK = 0,
  AMP_STATUS_INVALID_ARGUMENT = 1,
  AMP_STATUS_OUT_OF_DOMAIN = 2,
  AMP_STATUS_NOT_CONVERGED = 3,
  AMP_STATUS_NO_SOLUTION = 4,
  AMP_STATUS_DIMENSION_MISMATCH = 5,
  AMP_STATUS_DIVERGENCE = 6,
  AMP_STATUS_INTERNAL = 7,
  AMP_STATUS_IO = 8,
  AMP_STATUS_NULL_POINTER = 9,
  AMP_STATUS_BUFFER_TOO_SMALL = 10,
  AMP_STATUS_PANIC = 11,
} AmpStatus;

typedef enum AmpEnsemble {
  AMP_ENSEMBLE_GAUSSIAN = 0,
  AMP_ENSEMBLE_RADEMACHER = 1,
} AmpEnsemble;

typedef enum AmpPolicy {
  AMP_POLICY_STATE_EVOLUTION = 0,
  AMP_POLICY_EMPIRICAL = 1,
  AMP_POLICY_CALIBRATED = 2,
} AmpPolicy;

/**
 * Opaque problem instance `(A, x0, w, y)`.
 */
typedef struct AmpInstance AmpInstance;

/**
 * Opaque signal/noise model.
 */
typedef struct AmpParams AmpParams;

/**
 * Asymptotic prediction for the LASSO at one penalty.
 */
typedef struct AmpPrediction {
  double tau2_star;
  double theta_star;
  double alpha;
  double lambda;
  double mse;
  double l1;
  double sparsity;
} AmpPrediction;

/**
 * Summary of a LASSO solve or an AMP run.
 */
typedef struct AmpSolveInfo {
  size_t iterations;
  /**
   * KKT residual for the LASSO, last `N^{-1/2} ||x^t - x^{t-1}||` for AMP.
   */
  double residual;
  bool converged;
} AmpSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *amp_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be NULL or point to `len` writable bytes.
 */
size_t amp_last_error_message(char *buf, size_t len);

/**
 * Creates a model with a prior on `k` atoms.
 *
 * # Safety
 * `atoms` and `weights` must point to `k` readable values; `out` must be writable.
 */
enum AmpStatus amp_params_new(double delta,
                              double sigma2,
                              const double *atoms,
                              const double *weights,
                              size_t k,
                              struct AmpParams **out_params);

/**
 * The reference model: `delta = 0.64`, `sigma^2 = 0.2`, three-point prior with mass 0.064 at each of +-1.
 *
 * # Safety
 * `out_params` must be writable.
 */
enum AmpStatus amp_params_reference(struct AmpParams **out_params);

/**
 * # Safety
 * `params` must be NULL or a handle from this library that has not been freed.
 */
void amp_params_free(struct AmpParams *params);

/**
 * `eta(x; theta)`; `theta` must be nonnegative.
 *
 * # Safety
 * `out_value` must be writable.
 */
enum AmpStatus amp_soft_threshold(double x, double theta, double *out_value);

/**
 * # Safety
 * `out_alpha` must be writable.
 */
enum AmpStatus amp_alpha_min(double delta, double *out_alpha);

/**
 * # Safety
 * `params` must be a live handle; `out_tau2` must be writable.
 */
enum AmpStatus amp_tau2_star(const struct AmpParams *params, double alpha, double *out_tau2);

/**
 * # Safety
 * `params` must be a live handle; `out_lambda` must be writable.
 */
enum AmpStatus amp_calibrate_lambda(const struct AmpParams *params,
                                    double alpha,
                                    double *out_lambda);

/**
 * # Safety
 * `params` must be a live handle; `out_alpha` must be writable.
 */
enum AmpStatus amp_invert_calibration(const struct AmpParams *params,
                                      double lambda,
                                      double *out_alpha);

/**
 * # Safety
 * `params` must be a live handle; `out_prediction` must be writable.
 */
enum AmpStatus amp_predicted_risk(const struct AmpParams *params,
                                  double lambda,
                                  struct AmpPrediction *out_prediction);

/**
 * Draws an instance with `N = n_signal` and `n = round(delta N)`.
 *
 * # Safety
 * `params` must be a live handle; `out_instance` must be writable.
 */
enum AmpStatus amp_instance_generate(const struct AmpParams *params,
                                     size_t n_signal,
                                     enum AmpEnsemble ensemble,
                                     uint64_t seed,
                                     struct AmpInstance **out_instance);

/**
 * # Safety
 * `file` must be a NUL-terminated path; `out_instance` must be writable.
 */
enum AmpStatus amp_instance_load(const char *file, struct AmpInstance **out_instance);

/**
 * # Safety
 * `instance` must be a live handle; `file` must be a NUL-terminated path.
 */
enum AmpStatus amp_instance_save(const struct AmpInstance *instance, const char *file);

/**
 * # Safety
 * `instance` must be NULL or a handle from this library that has not been freed.
 */
void amp_instance_free(struct AmpInstance *instance);

/**
 * Writes `N` (signal length) and `n` (measurements).
 *
 * # Safety
 * `instance` must be a live handle; the outputs must be writable.
 */
enum AmpStatus amp_instance_dims(const struct AmpInstance *instance,
                                 size_t *out_n_signal,
                                 size_t *out_n_measurements);

/**
 * Copies the true signal (`N` values).
 *
 * # Safety
 * `instance` must be a live handle; `buf` must hold `len` writable values.
 */
enum AmpStatus amp_instance_signal(const struct AmpInstance *instance, double *buf, size_t len);

/**
 * Copies the measurements `y` (`n` values).
 *
 * # Safety
 * `instance` must be a live handle; `buf` must hold `len` writable values.
 */
enum AmpStatus amp_instance_measurements(const struct AmpInstance *instance,
                                         double *buf,
                                         size_t len);

/**
 * Copies `A` in row-major order (`n * N` values).
 *
 * # Safety
 * `instance` must be a live handle; `buf` must hold `len` writable values.
 */
enum AmpStatus amp_instance_matrix(const struct AmpInstance *instance, double *buf, size_t len);

/**
 * Solves the LASSO to KKT residual `tol` (pass 0 for the default) and
 * writes the minimizer into `x_out` (`N` values).
 *
 * # Safety
 * `instance` must be a live handle; `x_out` must hold `len` writable values;
 * `info` must be NULL or writable.
 */
enum AmpStatus amp_solve_lasso(const struct AmpInstance *instance,
                               double lambda,
                               double tol,
                               double *x_out,
                               size_t len,
                               struct AmpSolveInfo *info);

/**
 * Runs AMP at penalty `lambda` for at most `t_max` steps and writes the
 * final estimate into `x_out` (`N` values).
 *
 * # Safety
 * `instance` and `params` must be live handles; `x_out` must hold `len`
 * writable values; `info` must be NULL or writable.
 */
enum AmpStatus amp_run(const struct AmpInstance *instance,
                       const struct AmpParams *params,
                       double lambda,
                       size_t t_max,
                       double stop_tol,
                       enum AmpPolicy policy,
                       double *x_out,
                       size_t len,
                       struct AmpSolveInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMP_LASSO_H */
