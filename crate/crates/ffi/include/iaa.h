#ifndef IAA_H
#define IAA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum IaaStatus {
  IAA_STATUS_OK = 0,
  IAA_STATUS_NULL_POINTER = 1,
  IAA_STATUS_INVALID_ARGUMENT = 2,
  IAA_STATUS_DIMENSION_MISMATCH = 3,
  IAA_STATUS_IO = 4,
  IAA_STATUS_PARSE = 5,
  IAA_STATUS_DEGENERATE = 6,
  IAA_STATUS_PANIC = 7,
  IAA_STATUS_OTHER = 8,
} IaaStatus;

// Norm used by [`iaa_check_theorem`].
typedef enum IaaNorm {
  IAA_NORM_L1 = 0,
  IAA_NORM_L2 = 1,
} IaaNorm;

// Opaque score scale.
typedef struct IaaScale IaaScale;

// Opaque annotation table.
typedef struct IaaTable IaaTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a success.
// Valid until the next call on the same thread.
const char *iaa_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *iaa_version(void);

// Create a scale from a preset name ("para" or "lapis").
//
// # Safety
// `name` must be a valid C string and `out` a valid pointer.
enum IaaStatus iaa_scale_preset(const char *name, struct IaaScale **out);

// Create a scale from `len` strictly increasing values.
//
// # Safety
// `values` must point to `len` doubles and `out` must be valid.
enum IaaStatus iaa_scale_new(const double *values, size_t len, struct IaaScale **out);

// Number of score levels, or 0 for a null handle.
//
// # Safety
// `scale` must be null or a live handle.
size_t iaa_scale_bin_count(const struct IaaScale *scale);

// # Safety
// `scale` must be null or a handle not yet freed.
void iaa_scale_free(struct IaaScale *scale);

// Expected score of a distribution over the scale's levels.
//
// # Safety
// `mass` must point to `len` doubles; `scale` and `out` must be valid.
enum IaaStatus iaa_mean_score(const struct IaaScale *scale,
                              const double *mass,
                              size_t len,
                              double *out);

// Wasserstein-1 distance between two distributions on the scale.
//
// # Safety
// `p` and `q` must point to `len` doubles; `scale` and `out` must be valid.
enum IaaStatus iaa_emd_w1(const struct IaaScale *scale,
                          const double *p,
                          const double *q,
                          size_t len,
                          double *out);

// CDF loss `(mean |CDF_p - CDF_q|^r)^(1/r)`.
//
// # Safety
// `p` and `q` must point to `len` doubles; `out` must be valid.
enum IaaStatus iaa_emd_loss(const double *p, const double *q, size_t len, double r, double *out);

// Spearman rank correlation with average ranks for ties.
//
// # Safety
// `x` and `y` must point to `n` doubles; `out` must be valid.
enum IaaStatus iaa_srocc(const double *x, const double *y, size_t n, double *out);

// Pearson correlation.
//
// # Safety
// `x` and `y` must point to `n` doubles; `out` must be valid.
enum IaaStatus iaa_plcc(const double *x, const double *y, size_t n, double *out);

// `1 - sum p_k^2`.
//
// # Safety
// `mass` must point to `len` doubles; `out` must be valid.
enum IaaStatus iaa_gini_impurity(const double *mass, size_t len, double *out);

// Compare the group loss (distance to the mean of the one-hot targets) with
// the individual loss (mean distance to each target). Targets are bin
// indices into a `bins`-level scale.
//
// # Safety
// `pred` must point to `bins` doubles and `targets` to `n` indices; the out
// pointers must be valid.
enum IaaStatus iaa_check_theorem(const double *pred,
                                 size_t bins,
                                 const size_t *targets,
                                 size_t n,
                                 enum IaaNorm norm,
                                 double *out_giaa,
                                 double *out_piaa,
                                 int *out_holds);

// Load an annotation CSV. `schema` and `scale` are preset names or file
// paths; `features` may be null.
//
// # Safety
// String arguments must be valid C strings (or null for `features`); `out`
// must be valid.
enum IaaStatus iaa_table_ingest(const char *annotations,
                                const char *schema,
                                const char *scale,
                                const char *features,
                                struct IaaTable **out);

// Image, rater and record counts.
//
// # Safety
// `table` must be a live handle; out pointers must be valid.
enum IaaStatus iaa_table_counts(const struct IaaTable *table,
                                size_t *images,
                                size_t *raters,
                                size_t *records);

// Group EMD between raters labelled `label` in `field` and everyone else.
//
// # Safety
// `table` must be a live handle; strings must be valid; `out` must be valid.
enum IaaStatus iaa_table_group_emd(const struct IaaTable *table,
                                   const char *field,
                                   const char *label,
                                   double *out);

// Record-weighted Gini impurity of the per-label score distributions.
//
// # Safety
// `table` must be a live handle; `field` must be valid; `out` must be valid.
enum IaaStatus iaa_table_demographic_gini(const struct IaaTable *table,
                                          const char *field,
                                          double *out);

// # Safety
// `table` must be null or a handle not yet freed.
void iaa_table_free(struct IaaTable *table);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IAA_H */
