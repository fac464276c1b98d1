#ifndef DVFP_H
#define DVFP_H

/* Generated by cbindgen from the dvfp-ffi sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call. Mirrors the CLI exit codes.
 */
typedef enum DvfpStatus {
  DvfpStatus_Ok = 0,
  /**
   * Null pointer, non-finite input, shape mismatch.
   */
  DvfpStatus_InvalidArgument = 1,
  /**
   * Parameters outside the validity region of the analysis.
   */
  DvfpStatus_OutOfValidity = 2,
  /**
   * Divergence, non-convergence or loss of positivity.
   */
  DvfpStatus_NumericalFailure = 3,
} DvfpStatus;

/**
 * Opaque drift model handle.
 */
typedef struct DvfpModel DvfpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *dvfp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dvfp_version(void);

/**
 * Principal branch of the Lambert W function on [0, inf).
 *
 * # Safety
 * `out` must point to a writable f64.
 */
enum DvfpStatus dvfp_lambert_w0(double z, double *out);

/**
 * Decay rate a - W(b H exp(a H))/H of the delay comparison equation.
 *
 * # Safety
 * `out` must point to a writable f64.
 */
enum DvfpStatus dvfp_halanay_rate(double a, double b, double h, double *out);

/**
 * The rate pair (lambda1, lambda2) of the contraction estimate.
 *
 * # Safety
 * `out_lambda1` and `out_lambda2` must point to writable f64s.
 */
enum DvfpStatus dvfp_lambdas(double gamma, double eta, double *out_lambda1, double *out_lambda2);

/**
 * Combined decay rate lambda(gamma, eta, H).
 *
 * # Safety
 * `out` must point to a writable f64.
 */
enum DvfpStatus dvfp_overall_rate(double gamma, double eta, double h, double *out);

/**
 * Largest admissible interaction size 2 gamma / (3 (1 + gamma)).
 */
double dvfp_eta_bar(double gamma);

/**
 * Non-interacting decay rate gamma (1 - sqrt(gamma^2/(4 + gamma^2))).
 */
double dvfp_hypocoercive_rate(double gamma);

/**
 * Friction maximizing the non-interacting rate: sqrt(2 (sqrt(5) - 1)).
 */
double dvfp_optimal_friction(void);

/**
 * Kummer's function M(lam, 1, tau) for lam in [0, 1], tau >= 0.
 *
 * # Safety
 * `out` must point to a writable f64.
 */
enum DvfpStatus dvfp_kummer_m(double lam, double tau, double *out);

/**
 * Infinite-delay comparison solution phi(t) through (t0, y0).
 *
 * # Safety
 * `out` must point to a writable f64.
 */
enum DvfpStatus dvfp_phi_infinite_delay(double lambda1,
                                        double lambda2,
                                        double y0,
                                        double t0,
                                        double t,
                                        double *out);

/**
 * Exact Wasserstein-2 distance between two row-major n x dim clouds.
 *
 * # Safety
 * `a` and `b` must point to n*dim readable f64s; `out` must be writable.
 */
enum DvfpStatus dvfp_dist2_exact(const double *a,
                                 const double *b,
                                 uintptr_t n,
                                 uintptr_t dim,
                                 double *out);

/**
 * Exact squared perturbed-metric distance between two clouds under the
 * form Q(z) = qa |z1|^2 + 2 <z1, z2> + qb |z2|^2 (dim must be even).
 *
 * # Safety
 * `a` and `b` must point to n*dim readable f64s; `out_squared` writable.
 */
enum DvfpStatus dvfp_distq_exact(const double *a,
                                 const double *b,
                                 uintptr_t n,
                                 uintptr_t dim,
                                 double qa,
                                 double qb,
                                 double *out_squared);

/**
 * Index-coupled upper bound of the squared perturbed-metric distance.
 *
 * # Safety
 * `a` and `b` must point to n*dim readable f64s; `out_squared` writable.
 */
enum DvfpStatus dvfp_distq_coupled_upper(const double *a,
                                         const double *b,
                                         uintptr_t n,
                                         uintptr_t dim,
                                         double qa,
                                         double qb,
                                         double *out_squared);

/**
 * Create a model with A(x) = -alpha x and the linear interaction
 * B(x, xhat) = -coeff (x - xhat) (coeff = 0 for no interaction). Returns
 * null on invalid parameters (message via [`dvfp_last_error_message`]).
 * Free with [`dvfp_model_free`].
 */
struct DvfpModel *dvfp_model_new_linear(uintptr_t dimension,
                                        double alpha,
                                        double gamma,
                                        double sigma,
                                        double cutoff,
                                        double coeff);

/**
 * Destroy a model handle. Passing null is a no-op.
 *
 * # Safety
 * `model` must be a pointer returned by `dvfp_model_new_*`, freed once.
 */
void dvfp_model_free(struct DvfpModel *model);

/**
 * The perturbation size eta = c_g + 2 c_B of a model.
 *
 * # Safety
 * `model` must be a live handle.
 */
double dvfp_model_eta(const struct DvfpModel *model);

/**
 * Evaluate the confining drift A at a point of the model dimension.
 *
 * # Safety
 * `x` and `out` must point to `dimension` readable/writable f64s.
 */
enum DvfpStatus dvfp_model_eval_a(const struct DvfpModel *model,
                                  const double *x,
                                  uintptr_t len,
                                  double *out);

/**
 * Run a synchronously coupled pair of ensembles under the model and write
 * the contraction functional trace. The two ensembles start from Gaussian
 * clouds centered at +/- separation/2. `capacity` is the length of both
 * output arrays; the number of recorded points (steps/stride + 1) is
 * written to `out_written` and must fit.
 *
 * # Safety
 * `out_times` and `out_j` must point to `capacity` writable f64s;
 * `out_written` must be writable.
 */
enum DvfpStatus dvfp_run_coupled_trace(const struct DvfpModel *model,
                                       uintptr_t n,
                                       double dt,
                                       double t_final,
                                       uintptr_t stride,
                                       uint64_t seed,
                                       double separation,
                                       double *out_times,
                                       double *out_j,
                                       uintptr_t capacity,
                                       uintptr_t *out_written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DVFP_H */
