#ifndef SFREE_H
#define SFREE_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes of every fallible call.
 */
typedef enum SfreeStatus {
  SFREE_STATUS_OK = 0,
  SFREE_STATUS_NULL_POINTER = 1,
  SFREE_STATUS_INVALID_UTF8 = 2,
  SFREE_STATUS_PARSE_ERROR = 3,
  SFREE_STATUS_DIMENSION_MISMATCH = 4,
  SFREE_STATUS_EVALUATION_ERROR = 5,
  SFREE_STATUS_ESTIMATOR_ERROR = 6,
  SFREE_STATUS_CUT_ERROR = 7,
  SFREE_STATUS_LP_ERROR = 8,
  SFREE_STATUS_INVALID_ARGUMENT = 9,
  SFREE_STATUS_PANIC = 10,
} SfreeStatus;

/**
 * Concave underestimator and convex overestimator tight at a base point.
 */
typedef struct SfreeEstimator SfreeEstimator;

/**
 * Parsed expression.
 */
typedef struct SfreeExpr SfreeExpr;

/**
 * Switches for [`sfree_pipeline_json`].
 */
typedef struct SfreePipelineOptions {
  bool bounds;
  bool monoidal;
  /**
   * 1-based index of the integer variable to strengthen, 0 for all.
   */
  size_t k;
  bool sos1;
  bool tuy;
  bool timing;
} SfreePipelineOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next call.
 */
const char *sfree_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *sfree_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void sfree_string_free(char *s);

/**
 * Parses `text` over `dim` variables named `x1..xn`.
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum SfreeStatus sfree_expr_parse(const char *text, size_t dim, struct SfreeExpr **out);

/**
 * Evaluates `e` at `x` (length `len`).
 *
 * # Safety
 * Pointers must be valid; `x` must hold `len` doubles.
 */
enum SfreeStatus sfree_expr_eval(const struct SfreeExpr *e,
                                 const double *x,
                                 size_t len,
                                 double *out);

/**
 * Printed form of `e`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfreeStatus sfree_expr_to_string(const struct SfreeExpr *e, char **out);

/**
 * Number of variables `e` was parsed with.
 *
 * # Safety
 * `e` must be a valid handle.
 */
size_t sfree_expr_dim(const struct SfreeExpr *e);

/**
 * Releases an expression handle.
 *
 * # Safety
 * `e` must come from this library and not be freed twice.
 */
void sfree_expr_free(struct SfreeExpr *e);

/**
 * Estimator pair of `e` tight at `at` (length must equal the expression's dimension).
 *
 * # Safety
 * Pointers must be valid; `at` must hold `len` doubles.
 */
enum SfreeStatus sfree_estimate(const struct SfreeExpr *e,
                                const double *at,
                                size_t len,
                                struct SfreeEstimator **out);

/**
 * Values of the underestimator and overestimator at `x`.
 *
 * # Safety
 * Pointers must be valid; `x` must hold `len` doubles.
 */
enum SfreeStatus sfree_estimator_eval(const struct SfreeEstimator *est,
                                      const double *x,
                                      size_t len,
                                      double *under,
                                      double *over);

/**
 * New expression handle holding the underestimator.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfreeStatus sfree_estimator_under(const struct SfreeEstimator *est, struct SfreeExpr **out);

/**
 * Printed underestimator and overestimator.
 *
 * # Safety
 * Pointers must be valid.
 */
enum SfreeStatus sfree_estimator_strings(const struct SfreeEstimator *est,
                                         char **under,
                                         char **over);

/**
 * Releases an estimator handle.
 *
 * # Safety
 * `est` must come from this library and not be freed twice.
 */
void sfree_estimator_free(struct SfreeEstimator *est);

/**
 * Intersection cut `Σ coeffs_j (x_j − apex_j) ≥ 1` of `{h_ave ≥ 0}` along axis rays.
 *
 * # Safety
 * `apex` and `coeffs` must hold `n` doubles.
 */
enum SfreeStatus sfree_intersection_cut(const struct SfreeExpr *h_ave,
                                        const double *apex,
                                        size_t n,
                                        double *coeffs);

/**
 * Intersection cut of the set enlarged with the box `[lower, upper]`.
 *
 * # Safety
 * `apex`, `lower`, `upper` and `coeffs` must hold `n` doubles.
 */
enum SfreeStatus sfree_strengthened_cut(const struct SfreeExpr *h_ave,
                                        const double *apex,
                                        const double *lower,
                                        const double *upper,
                                        size_t n,
                                        size_t grid,
                                        bool tuy,
                                        double safety,
                                        double *coeffs);

/**
 * Monoidal cut for the 1-based integer index `k` over `[0, upper]`.
 *
 * # Safety
 * `upper` and `coeffs` must hold `n` doubles.
 */
enum SfreeStatus sfree_monoidal_cut(const struct SfreeExpr *h_ave,
                                    const double *upper,
                                    size_t n,
                                    size_t k,
                                    size_t directions,
                                    double *coeffs);

/**
 * Runs the separation pipeline on instance JSON and returns the report JSON.
 *
 * `exit_code` receives the CLI status: 0 with cuts, 4 when no constraint is
 * violated, 5 when a violated constraint produced no cut.
 *
 * # Safety
 * Pointers must be valid; `opts` may be null for defaults.
 */
enum SfreeStatus sfree_pipeline_json(const char *instance_json,
                                     const struct SfreePipelineOptions *opts,
                                     char **report,
                                     int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SFREE_H */
