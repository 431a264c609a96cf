#ifndef EDITQA_H
#define EDITQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Rating dimensions.
 */
#define EQ_DIM_VIDEO_QUALITY 0

#define EQ_DIM_EDITING_ALIGNMENT 1

#define EQ_DIM_STRUCTURAL_CONSISTENCY 2

/**
 * Result codes.
 */
typedef enum EqStatus {
  EQ_OK = 0,
  /**
   * A required pointer argument was null.
   */
  EQ_ERR_NULL = 1,
  /**
   * An argument was out of range or inconsistent.
   */
  EQ_ERR_INVALID = 2,
  /**
   * The data admit no defined result (constant input, degenerate rater).
   */
  EQ_ERR_DEGENERATE = 3,
  /**
   * A file could not be read.
   */
  EQ_ERR_IO = 4,
  /**
   * A file was read but its contents are malformed.
   */
  EQ_ERR_PARSE = 5,
  /**
   * Internal failure; the library state is unchanged.
   */
  EQ_ERR_PANIC = 6,
} EqStatus;

/**
 * Opaque trained regression model.
 */
typedef struct EqHead EqHead;

/**
 * Opaque validated dataset manifest.
 */
typedef struct EqManifest EqManifest;

/**
 * Opaque items × subjects rating grid for one dimension.
 */
typedef struct EqRatingMatrix EqRatingMatrix;

/**
 * Reliability of a complete grid.
 */
typedef struct EqIcc {
  double icc_single;
  double icc_average;
  double ci_single_low;
  double ci_single_high;
  double ci_average_low;
  double ci_average_high;
} EqIcc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *eq_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *eq_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void eq_string_free(char *s);

/**
 * Spearman rank correlation with average ranks for ties.
 *
 * # Safety
 * `predicted` and `reference` must each hold `n` values; `out` must be writable.
 */
enum EqStatus eq_srcc(const double *predicted, const double *reference, size_t n, double *out);

/**
 * Pearson linear correlation on raw values.
 *
 * # Safety
 * As for [`eq_srcc`].
 */
enum EqStatus eq_plcc(const double *predicted, const double *reference, size_t n, double *out);

/**
 * Kendall tau-b.
 *
 * # Safety
 * As for [`eq_srcc`].
 */
enum EqStatus eq_krcc(const double *predicted, const double *reference, size_t n, double *out);

/**
 * Five-level index (0 = bad … 4 = excellent) of `score` within `[min, max]`.
 *
 * # Safety
 * `out_level` must be writable.
 */
enum EqStatus eq_discretize(double score, double min, double max, int32_t *out_level);

/**
 * Stage-2 training label such as "The quality of this video is poor (49.33).".
 *
 * # Safety
 * `out` must be writable; release the result with [`eq_string_free`].
 */
enum EqStatus eq_label_stage2(double score,
                              double min,
                              double max,
                              int32_t dimension_id,
                              char **out);

/**
 * Creates an empty grid; every cell starts missing.
 *
 * # Safety
 * `out` must be writable; release the handle with [`eq_matrix_free`].
 */
enum EqStatus eq_matrix_new(int32_t dimension_id,
                            size_t n_items,
                            size_t n_subjects,
                            struct EqRatingMatrix **out);

/**
 * Stores one rating. Non-finite values are rejected.
 *
 * # Safety
 * `matrix` must be a live handle.
 */
enum EqStatus eq_matrix_set(struct EqRatingMatrix *matrix,
                            size_t item,
                            size_t subject,
                            double value);

/**
 * Marks one cell missing again.
 *
 * # Safety
 * `matrix` must be a live handle.
 */
enum EqStatus eq_matrix_clear(struct EqRatingMatrix *matrix, size_t item, size_t subject);

/**
 * Per-item MOS after per-subject z-scoring. Degenerate subjects are skipped
 * and counted in `out_excluded` (may be null); items left without ratings get
 * NaN.
 *
 * # Safety
 * `out_mos` must hold `len` values and `len` must equal the item count.
 */
enum EqStatus eq_matrix_compute_mos(const struct EqRatingMatrix *matrix,
                                    double *out_mos,
                                    size_t len,
                                    size_t *out_excluded);

/**
 * ICC(2,1) and ICC(2,k) with confidence intervals; every cell must be set.
 *
 * # Safety
 * `matrix` must be a live handle and `out` writable.
 */
enum EqStatus eq_matrix_icc(const struct EqRatingMatrix *matrix,
                            double confidence,
                            struct EqIcc *out);

/**
 * Releases a grid. Null is ignored.
 *
 * # Safety
 * `matrix` must come from [`eq_matrix_new`] and not be freed twice.
 */
void eq_matrix_free(struct EqRatingMatrix *matrix);

/**
 * Loads and validates a manifest JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable; release the
 * handle with [`eq_manifest_free`].
 */
enum EqStatus eq_manifest_load(const char *path, struct EqManifest **out);

/**
 * Number of edited items, or 0 for a null handle.
 *
 * # Safety
 * `manifest` must be null or a live handle.
 */
size_t eq_manifest_item_count(const struct EqManifest *manifest);

/**
 * Id of item `index`; release with [`eq_string_free`].
 *
 * # Safety
 * `manifest` must be a live handle and `out` writable.
 */
enum EqStatus eq_manifest_item_id(const struct EqManifest *manifest, size_t index, char **out);

/**
 * Releases a manifest. Null is ignored.
 *
 * # Safety
 * `manifest` must come from [`eq_manifest_load`] and not be freed twice.
 */
void eq_manifest_free(struct EqManifest *manifest);

/**
 * Loads parameters written by `editqa headtrain`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable; release the
 * handle with [`eq_head_free`].
 */
enum EqStatus eq_head_load(const char *path, struct EqHead **out);

/**
 * Length of the input vector [`eq_head_predict`] expects, or 0 for null.
 *
 * # Safety
 * `head` must be null or a live handle.
 */
size_t eq_head_input_dim(const struct EqHead *head);

/**
 * Scalar score for one pooled input vector.
 *
 * # Safety
 * `x` must hold `n` values and `out` be writable.
 */
enum EqStatus eq_head_predict(const struct EqHead *head, const double *x, size_t n, double *out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `head` must come from [`eq_head_load`] and not be freed twice.
 */
void eq_head_free(struct EqHead *head);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDITQA_H */
