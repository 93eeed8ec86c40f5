#ifndef BPG_LAB_H
#define BPG_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BpgStatus {
  BPG_STATUS_OK = 0,
  BPG_STATUS_NULL_POINTER = 1,
  BPG_STATUS_INVALID_UTF8 = 2,
  BPG_STATUS_INVALID_ARGUMENT = 3,
  BPG_STATUS_DIMENSION_MISMATCH = 4,
  BPG_STATUS_NOT_POSITIVE_DEFINITE = 5,
  BPG_STATUS_NUMERICAL = 6,
  BPG_STATUS_STEP_CAP = 7,
  BPG_STATUS_DIVERGED = 8,
  BPG_STATUS_TOO_LARGE = 9,
  BPG_STATUS_CONFIG = 10,
  BPG_STATUS_IO = 11,
  BPG_STATUS_PANIC = 12,
} BpgStatus;

/**
 * A parsed experiment configuration together with its environment and policy.
 */
typedef struct BpgExperiment BpgExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bpg_version(void);

/**
 * Message of the last failure on this thread, or NULL if none occurred.
 * Valid until the next failing call on the same thread.
 */
const char *bpg_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void bpg_string_free(char *s);

/**
 * Number of built-in presets.
 */
size_t bpg_preset_count(void);

/**
 * Name of preset `index` written to `*out` as a caller-owned string.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum BpgStatus bpg_preset_name(size_t index, char **out);

/**
 * Creates an experiment from a built-in preset.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` valid for writes.
 */
enum BpgStatus bpg_experiment_from_preset(const char *name, struct BpgExperiment **out);

/**
 * Creates an experiment from `key = value` configuration text.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` valid for writes.
 */
enum BpgStatus bpg_experiment_from_text(const char *config, struct BpgExperiment **out);

/**
 * Overrides one configuration key. On failure the experiment is unchanged.
 *
 * # Safety
 * `exp` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum BpgStatus bpg_experiment_set(struct BpgExperiment *exp, const char *key, const char *value);

/**
 * Releases an experiment. NULL is ignored.
 *
 * # Safety
 * `exp` must come from this library and must not be used afterwards.
 */
void bpg_experiment_free(struct BpgExperiment *exp);

/**
 * Number of policy parameters.
 *
 * # Safety
 * `exp` must be a live handle and `out` valid for writes.
 */
enum BpgStatus bpg_experiment_dim(const struct BpgExperiment *exp, size_t *out);

/**
 * Starting parameters of run `run`, written to `theta_out[0..len]`.
 *
 * # Safety
 * `exp` must be a live handle and `theta_out` valid for `len` writes.
 */
enum BpgStatus bpg_experiment_initial_theta(const struct BpgExperiment *exp,
                                            uint64_t run,
                                            double *theta_out,
                                            size_t len);

/**
 * One gradient estimate from `m` fresh episodes at `theta`.
 *
 * `estimator` is one of `mc`, `bq1`, `bq2`, `bq1-sparse`, `bq2-sparse`,
 * `bac`, `bac-sparse`. The sample is drawn from the stream for repetition
 * `rep`, so equal arguments give equal results. `mean_out` receives `len`
 * values. If `cov_out` is not NULL it receives the `len × len` posterior
 * covariance (the sample covariance of the mean for `mc`) when the
 * estimator reports one; `*has_cov` (if not NULL) reports
 * whether it was written.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `cov_out` and `has_cov`
 * may be NULL.
 */
enum BpgStatus bpg_experiment_estimate(const struct BpgExperiment *exp,
                                       const char *estimator,
                                       const double *theta,
                                       size_t len,
                                       size_t m,
                                       uint64_t rep,
                                       double *mean_out,
                                       double *cov_out,
                                       bool *has_cov);

/**
 * Runs the configured gradient comparison and returns its CSV in `*out`.
 *
 * # Safety
 * `exp` must be a live handle and `out` valid for writes.
 */
enum BpgStatus bpg_experiment_grad_compare_csv(const struct BpgExperiment *exp, char **out);

/**
 * Runs the configured learning experiment and returns its CSV in `*out`.
 *
 * # Safety
 * `exp` must be a live handle and `out` valid for writes.
 */
enum BpgStatus bpg_experiment_optimize_csv(const struct BpgExperiment *exp, char **out);

/**
 * Posterior mean and variance of a scalar integral under a GP prior.
 *
 * `kernel` and `noise` are `n × n`, `y` and `b` have length `n`. The prior
 * mean of the integrand is zero, `rho0` is the prior mean of the integral
 * and `b0` its prior variance.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum BpgStatus bpg_integral_posterior(size_t n,
                                      const double *kernel,
                                      const double *noise,
                                      const double *y,
                                      const double *b,
                                      double rho0,
                                      double b0,
                                      double *mean_out,
                                      double *var_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BPG_LAB_H */
