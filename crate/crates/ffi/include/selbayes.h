#ifndef SELBAYES_H
#define SELBAYES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_POINTER = 1,
  SB_STATUS_INVALID_INPUT = 2,
  SB_STATUS_PARSE = 3,
  SB_STATUS_NUMERICAL = 4,
  SB_STATUS_NON_CONVERGENCE = 5,
  SB_STATUS_SAMPLER_ABORT = 6,
  SB_STATUS_IO = 7,
  /**
   * The selection is empty; there is nothing to infer.
   */
  SB_STATUS_NO_MODEL = 8,
  SB_STATUS_PANIC = 9,
} SbStatus;

/**
 * Selection-aware posterior for a nonempty selection.
 */
typedef struct SbPosterior SbPosterior;

/**
 * Result of one randomized LASSO selection on `(y, G)`.
 */
typedef struct SbSelection SbSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *sb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sb_version(void);

/**
 * Runs the randomized LASSO on all columns of the `n × p` matrix `g`.
 *
 * `lambda <= 0` picks the noise-scaled default and `eta_sq <= 0` uses the
 * full-model noise estimate. On success `*out` owns a new handle, even when
 * nothing is selected.
 *
 * # Safety
 * `y` must point to `n` values and `g` to `n * p` values.
 */
enum SbStatus sb_select(const double *y,
                        const double *g,
                        size_t n,
                        size_t p,
                        double lambda,
                        double eta_sq,
                        uint64_t seed,
                        struct SbSelection **out);

/**
 * Number of selected columns.
 *
 * # Safety
 * `sel` must be a live handle or null.
 */
enum SbStatus sb_selection_len(const struct SbSelection *sel, size_t *out_len);

/**
 * Copies the selected column indices and their signs into buffers of
 * length `cap`, which must be at least the selection length.
 *
 * # Safety
 * `sel` must be a live handle; buffers must hold `cap` elements.
 */
enum SbStatus sb_selection_active(const struct SbSelection *sel,
                                  size_t *out_indices,
                                  double *out_signs,
                                  size_t cap);

/**
 * Noise estimate and randomization variance used by the selection.
 *
 * # Safety
 * `sel` must be a live handle.
 */
enum SbStatus sb_selection_noise(const struct SbSelection *sel,
                                 double *out_sigma_sq_hat,
                                 double *out_eta_sq);

/**
 * # Safety
 * `sel` must come from [`sb_select`] and not be freed twice.
 */
void sb_selection_free(struct SbSelection *sel);

/**
 * Builds the posterior. `sigma_sq <= 0` estimates the noise on the selected
 * columns; `prior_scale <= 0` uses a flat prior, otherwise a Laplace prior
 * with that scale.
 *
 * # Safety
 * `sel` must be a live handle and `out` writable.
 */
enum SbStatus sb_posterior_new(const struct SbSelection *sel,
                               double sigma_sq,
                               double prior_scale,
                               struct SbPosterior **out);

/**
 * Dimension of the parameter (the number of selected columns).
 *
 * # Safety
 * `post` must be a live handle.
 */
enum SbStatus sb_posterior_dim(const struct SbPosterior *post, size_t *out_dim);

/**
 * Log posterior in the reparameterized coordinates, up to a constant.
 *
 * # Safety
 * `zeta` must hold `dim` values.
 */
enum SbStatus sb_posterior_log_density(const struct SbPosterior *post,
                                       const double *zeta,
                                       size_t dim,
                                       double *out_value);

/**
 * Samples the posterior and writes medians (`dim` values) and equal-tailed
 * bounds (`dim * n_levels` values each, coefficient-major).
 *
 * # Safety
 * Buffers must match the sizes above and `levels` hold `n_levels` values.
 */
enum SbStatus sb_posterior_sample(const struct SbPosterior *post,
                                  size_t n_samples,
                                  size_t burn_in,
                                  uint64_t seed,
                                  const double *levels,
                                  size_t n_levels,
                                  double *out_median,
                                  double *out_lower,
                                  double *out_upper);

/**
 * # Safety
 * `post` must come from [`sb_posterior_new`] and not be freed twice.
 */
void sb_posterior_free(struct SbPosterior *post);

/**
 * GSVA scores for `n_sets` gene sets over a `p × n` (genes × samples)
 * expression matrix. Set `k` has members `members[offsets[k]..offsets[k+1]]`
 * (`offsets` has `n_sets + 1` entries). Writes an `n_sets × n` column-major
 * matrix to `out_scores`.
 *
 * # Safety
 * All buffers must hold the sizes described.
 */
enum SbStatus sb_gsva(const double *values,
                      size_t p,
                      size_t n,
                      const size_t *members,
                      const size_t *offsets,
                      size_t n_sets,
                      double tau,
                      double *out_scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELBAYES_H */
