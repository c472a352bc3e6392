#ifndef TTESS_H
#define TTESS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  TTESS_STATUS_OK = 0,
  TTESS_STATUS_NULL_POINTER = 1,
  TTESS_STATUS_INVALID_UTF8 = 2,
  TTESS_STATUS_INVALID_ARGUMENT = 3,
  TTESS_STATUS_INVALID_TESSELLATION = 4,
  TTESS_STATUS_INVALID_MODEL = 5,
  TTESS_STATUS_NUMERICAL = 6,
  TTESS_STATUS_ESTIMATION = 7,
  TTESS_STATUS_SAMPLER = 8,
  TTESS_STATUS_IO = 9,
  TTESS_STATUS_PANIC = 10,
} TtessStatus;

/**
 * A split/merge/flip Metropolis-Hastings-Green chain.
 */
typedef struct TtessChain TtessChain;

/**
 * An exponential-family Gibbs model.
 */
typedef struct TtessModel TtessModel;

/**
 * A T-tessellation of a convex domain.
 */
typedef struct TtessTessellation TtessTessellation;

/**
 * Counts and sums describing a tessellation.
 */
typedef struct {
  size_t cells;
  size_t nseint;
  size_t nnbseint;
  size_t nbseint;
  double u;
  double a2;
  double angle_sum;
} TtessStats;

/**
 * Settings for [`ttess_nois`].
 */
typedef struct {
  double delta;
  size_t max_iterations;
  uint64_t seed;
} TtessNoisOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ttess_version(void);

/**
 * Message for the last failed call on this thread, or NULL.
 *
 * The pointer stays valid until the next library call on the same thread.
 */
const char *ttess_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ttess_string_free(char *s);

/**
 * Empty tessellation of the rectangle `[0, width] x [0, height]`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
TtessStatus ttess_tessellation_new_rectangle(double width, double height, TtessTessellation **out);

/**
 * Parses a tessellation from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
TtessStatus ttess_tessellation_from_json(const char *json, TtessTessellation **out);

/**
 * Serializes a tessellation to JSON. Free the result with `ttess_string_free`.
 *
 * # Safety
 * `t` must be a live handle and `out` a valid pointer.
 */
TtessStatus ttess_tessellation_to_json(const TtessTessellation *t, char **out);

/**
 * # Safety
 * `t` must be a live handle and `out` a valid pointer.
 */
TtessStatus ttess_tessellation_stats(const TtessTessellation *t, TtessStats *out);

/**
 * Releases a tessellation. NULL is ignored.
 *
 * # Safety
 * `t` must come from this library and not have been freed.
 */
void ttess_tessellation_free(TtessTessellation *t);

/**
 * Closed-form CRTT maximum pseudolikelihood estimate.
 *
 * # Safety
 * `t` must be a live handle and `out` a valid pointer.
 */
TtessStatus ttess_crtt_mple(const TtessTessellation *t, double *out);

/**
 * Builds a model by name (`crtt`, `area` or `angle`) with parameter `theta`.
 *
 * # Safety
 * `kind` must be a NUL-terminated string, `theta` must point to `len`
 * doubles and `out` must be a valid pointer.
 */
TtessStatus ttess_model_new(const char *kind, const double *theta, size_t len, TtessModel **out);

/**
 * Number of parameters of `model`, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t ttess_model_dimension(const TtessModel *model);

/**
 * Energy `theta . T(t)` of a tessellation under `model`.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
TtessStatus ttess_model_energy(const TtessModel *model, const TtessTessellation *t, double *out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not have been freed.
 */
void ttess_model_free(TtessModel *model);

/**
 * Starts a chain from a copy of `init`, targeting a copy of `model`.
 *
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
TtessStatus ttess_chain_new(const TtessTessellation *init,
                            const TtessModel *model,
                            uint64_t seed,
                            TtessChain **out);

/**
 * Advances the chain by `steps` proposals.
 *
 * # Safety
 * `chain` must be a live handle.
 */
TtessStatus ttess_chain_run(TtessChain *chain, uint64_t steps);

/**
 * Copies the current state into a new tessellation handle.
 *
 * # Safety
 * `chain` must be a live handle and `out` a valid pointer.
 */
TtessStatus ttess_chain_state(const TtessChain *chain, TtessTessellation **out);

/**
 * Proposals made so far, or 0 for NULL.
 *
 * # Safety
 * `chain` must be NULL or a live handle.
 */
uint64_t ttess_chain_iteration(const TtessChain *chain);

/**
 * Releases a chain. NULL is ignored.
 *
 * # Safety
 * `chain` must come from this library and not have been freed.
 */
void ttess_chain_free(TtessChain *chain);

/**
 * Default NOIS settings.
 */
TtessNoisOptions ttess_nois_options_default(void);

/**
 * Maximum pseudolikelihood estimate by Newton optimization with increasing
 * splitting, started from the CRTT estimate.
 *
 * `theta_out` receives `theta_len` values, which must equal the model
 * dimension. `options` may be NULL for defaults; `converged` may be NULL.
 *
 * # Safety
 * Handles must be live and pointers valid for the stated lengths.
 */
TtessStatus ttess_nois(const TtessModel *model,
                       const TtessTessellation *t,
                       const TtessNoisOptions *options,
                       double *theta_out,
                       size_t theta_len,
                       bool *converged);

/**
 * Extended Kullback-Leibler divergence of two measures on `n` atoms.
 * Writes `+inf` when `beta` does not dominate `alpha`.
 *
 * # Safety
 * `alpha` and `beta` must point to `n` doubles and `out` must be valid.
 */
TtessStatus ttess_extended_kl(const double *alpha, const double *beta, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TTESS_H */
