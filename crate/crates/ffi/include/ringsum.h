#ifndef RINGSUM_H
#define RINGSUM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RINGSUM_OK 0

#define RINGSUM_ERR_NULL 1

#define RINGSUM_ERR_ARGUMENT 2

#define RINGSUM_ERR_DOMAIN 3

#define RINGSUM_ERR_MEMBERSHIP 4

#define RINGSUM_ERR_WINDOW 5

#define RINGSUM_ERR_NON_LAPLACE 6

#define RINGSUM_ERR_DEGENERATE 7

#define RINGSUM_ERR_BUFFER 8

#define RINGSUM_ERR_PANIC 99

#define RINGSUM_HARMONIC 0

#define RINGSUM_GEOMETRIC 1

#define RINGSUM_LAPLACE 0

#define RINGSUM_GAUSSIAN 1

#define RINGSUM_UNIFORM 2

/**
 * Protocol configuration under construction.
 */
typedef struct RingsumConfig RingsumConfig;

/**
 * Finished run: final states, estimator windows and message trace.
 */
typedef struct RingsumRun RingsumRun;

/**
 * One transmitted value.
 */
typedef struct RingsumMessage {
  uint64_t k;
  uint32_t sender;
  double value;
} RingsumMessage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *ringsum_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ringsum_version(void);

/**
 * New configuration: `n` secrets sharing one schedule. `param` is `d` for
 * harmonic and `phi` for geometric schedules.
 *
 * # Safety
 * `secrets` must point to `n` readable doubles and `out` must be writable.
 */
int32_t ringsum_config_new(const double *secrets,
                           size_t n,
                           int32_t family,
                           double c,
                           double param,
                           int32_t dist,
                           uint64_t steps,
                           uint64_t seed,
                           struct RingsumConfig **out);

/**
 * Schedule `node` to leave at step `at`.
 *
 * # Safety
 * `config` must be a live handle from [`ringsum_config_new`].
 */
int32_t ringsum_config_add_leave(struct RingsumConfig *config, uint64_t at, uint32_t node);

/**
 * Schedule `node` to join after `anchor` at step `at` holding `secret`.
 *
 * # Safety
 * `config` must be a live handle from [`ringsum_config_new`].
 */
int32_t ringsum_config_add_join(struct RingsumConfig *config,
                                uint64_t at,
                                uint32_t node,
                                uint32_t anchor,
                                double secret);

/**
 * # Safety
 * `config` must be null or a live handle; it is invalid afterwards.
 */
void ringsum_config_free(struct RingsumConfig *config);

/**
 * Synchronous run of all configured steps.
 *
 * # Safety
 * `config` must be a live handle and `out` writable.
 */
int32_t ringsum_run_si(const struct RingsumConfig *config, struct RingsumRun **out);

/**
 * Asynchronous run with Poisson clocks of `rate` up to time `horizon`.
 * Event times count local ticks.
 *
 * # Safety
 * `config` must be a live handle and `out` writable.
 */
int32_t ringsum_run_ai(const struct RingsumConfig *config,
                       double rate,
                       double horizon,
                       struct RingsumRun **out);

/**
 * # Safety
 * `run` must be null or a live handle; it is invalid afterwards.
 */
void ringsum_run_free(struct RingsumRun *run);

/**
 * Current member states ascending by identifier. `*len` always receives the
 * member count; `RINGSUM_ERR_BUFFER` if it exceeds `cap`. Either buffer may
 * be null when `cap` is 0.
 *
 * # Safety
 * `run` must be a live handle, `ids` and `values` writable for `cap`
 * elements, `len` writable.
 */
int32_t ringsum_run_states(const struct RingsumRun *run,
                           uint32_t *ids,
                           double *values,
                           size_t cap,
                           size_t *len);

/**
 * Message trace in transmission order, with the same size protocol as
 * [`ringsum_run_states`].
 *
 * # Safety
 * `run` must be a live handle, `buf` writable for `cap` elements, `len`
 * writable.
 */
int32_t ringsum_run_trace(const struct RingsumRun *run,
                          struct RingsumMessage *buf,
                          size_t cap,
                          size_t *len);

/**
 * Window-sum estimate of `node` at the run's final step. `k_start` may be
 * null.
 *
 * # Safety
 * `run` must be a live handle and `value` writable.
 */
int32_t ringsum_estimate(const struct RingsumRun *run,
                         uint32_t node,
                         double *value,
                         uint64_t *k_start);

/**
 * Asymptotic utility and variance bounds for `n` nodes sharing one schedule,
 * with the schedule magnitude read as a standard deviation.
 *
 * # Safety
 * `utility` and `variance` must be writable.
 */
int32_t ringsum_bounds(int32_t family,
                       double c,
                       double param,
                       size_t n,
                       double *utility,
                       double *variance);

/**
 * Composed Laplace privacy budget over `steps` rounds for sensitivity
 * `delta`.
 *
 * # Safety
 * `epsilon` must be writable.
 */
int32_t ringsum_epsilon(int32_t family,
                        double c,
                        double param,
                        double delta,
                        uint64_t steps,
                        double *epsilon);

/**
 * Optimal harmonic scale `c*` for the weighted objective; `objective` may
 * be null.
 *
 * # Safety
 * `c_star` must be writable.
 */
int32_t ringsum_solve_harmonic(double gamma_u,
                               double gamma_a,
                               double gamma_p,
                               size_t n,
                               double delta,
                               uint64_t steps,
                               double *c_star,
                               double *objective);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGSUM_H */
