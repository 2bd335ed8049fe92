#ifndef FBLAB_H
#define FBLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FblabStatus {
  FBLAB_STATUS_OK = 0,
  FBLAB_STATUS_NULL_POINTER = 1,
  FBLAB_STATUS_INVALID_ARGUMENT = 2,
  FBLAB_STATUS_OUT_OF_RANGE = 3,
  FBLAB_STATUS_EXACT_CHANNEL_SAMPLING = 4,
  FBLAB_STATUS_RESOURCE_CAP = 5,
  FBLAB_STATUS_CHECK_FAILED = 6,
  FBLAB_STATUS_INTERNAL = 7,
  FBLAB_STATUS_PANIC = 8,
} FblabStatus;

/**
 * Opaque channel handle.
 */
typedef struct FblabChannel FblabChannel;

typedef struct FblabSimStats {
  uint64_t trials;
  uint64_t errors;
  double estimate;
  double ci_low;
  double ci_high;
} FblabSimStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fblab_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void fblab_string_free(char *s);

/**
 * Creates a channel from a literal such as `"1/10"` or `"0.1"`. With
 * `exact != 0` all computations use rational arithmetic.
 *
 * # Safety
 * `literal` must be a valid C string and `out` a valid pointer.
 */
enum FblabStatus fblab_channel_new(const char *literal, int32_t exact, struct FblabChannel **out);

/**
 * Releases a channel. Null is ignored.
 *
 * # Safety
 * `ch` must come from [`fblab_channel_new`] and must not be used afterwards.
 */
void fblab_channel_free(struct FblabChannel *ch);

/**
 * Crossover probability as a double; NaN for a null handle.
 *
 * # Safety
 * `ch` must be null or a live handle.
 */
double fblab_channel_p(const struct FblabChannel *ch);

/**
 * `-ln(p^{1/3} q^{2/3} + p^{2/3} q^{1/3})`.
 *
 * # Safety
 * `ch` must be a live handle and `out` a valid pointer.
 */
enum FblabStatus fblab_feedback_exponent(const struct FblabChannel *ch, double *out);

/**
 * Max-posterior error probability at horizon `n` and its natural log.
 *
 * # Safety
 * `ch` must be a live handle; `pe` and `ln_pe` valid pointers.
 */
enum FblabStatus fblab_forward_error(const struct FblabChannel *ch,
                                     size_t n,
                                     double *pe,
                                     double *ln_pe);

/**
 * Exact max-posterior error probability as decimal numerator and denominator.
 * Requires an exact channel.
 *
 * # Safety
 * `ch` must be a live handle; `num` and `den` valid pointers. The strings must
 * be released with [`fblab_string_free`].
 */
enum FblabStatus fblab_forward_error_exact(const struct FblabChannel *ch,
                                           size_t n,
                                           char **num,
                                           char **den);

/**
 * Optimal error probability over all metric-state strategies.
 *
 * # Safety
 * `ch` must be a live handle and `pe` a valid pointer.
 */
enum FblabStatus fblab_bellman_error(const struct FblabChannel *ch, size_t n, double *pe);

/**
 * Upper and lower error bounds at horizon `n`.
 *
 * # Safety
 * `ch` must be a live handle; `upper` and `lower` valid pointers.
 */
enum FblabStatus fblab_bounds(const struct FblabChannel *ch,
                              size_t n,
                              double *upper,
                              double *lower);

/**
 * Monte Carlo estimate of the max-posterior error. Needs a float channel.
 *
 * # Safety
 * `ch` must be a live handle and `out` a valid pointer.
 */
enum FblabStatus fblab_simulate(const struct FblabChannel *ch,
                                size_t n,
                                uint64_t trials,
                                uint64_t seed,
                                size_t workers,
                                struct FblabSimStats *out);

/**
 * The bounds report as a JSON document; `n < 0` omits the horizon terms.
 *
 * # Safety
 * `ch` must be a live handle and `out` a valid pointer. Release the string
 * with [`fblab_string_free`].
 */
enum FblabStatus fblab_bounds_report_json(const struct FblabChannel *ch, int64_t n, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FBLAB_H */
