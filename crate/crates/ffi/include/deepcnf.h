#ifndef DEEPCNF_H
#define DEEPCNF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every function.
 */
typedef enum DcnfStatus {
  DCNF_STATUS_OK = 0,
  DCNF_STATUS_NULL_POINTER = 1,
  DCNF_STATUS_INVALID_UTF8 = 2,
  DCNF_STATUS_IO = 3,
  DCNF_STATUS_PARSE = 4,
  DCNF_STATUS_INVALID_ARGUMENT = 5,
  DCNF_STATUS_MODEL = 6,
  DCNF_STATUS_NUMERICAL = 7,
  DCNF_STATUS_UNDEFINED = 8,
  DCNF_STATUS_BUFFER_TOO_SMALL = 9,
  DCNF_STATUS_PANIC = 10,
} DcnfStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DcnfDataset DcnfDataset;

/**
 * Opaque model handle.
 */
typedef struct DcnfModel DcnfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dcnf_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *dcnf_last_error_message(void);

/**
 * Release a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void dcnf_string_free(char *s);

/**
 * Load a dataset file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DcnfStatus dcnf_dataset_load(const char *path, struct DcnfDataset **out);

/**
 * Parse a dataset from text in the file format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum DcnfStatus dcnf_dataset_parse(const char *text, struct DcnfDataset **out);

/**
 * # Safety
 * `ds` must come from a dataset constructor and not have been freed. NULL is
 * ignored.
 */
void dcnf_dataset_free(struct DcnfDataset *ds);

/**
 * Number of sequences, or 0 for NULL.
 *
 * # Safety
 * `ds` must be a live handle or NULL.
 */
size_t dcnf_dataset_num_sequences(const struct DcnfDataset *ds);

/**
 * Length of sequence `index`.
 *
 * # Safety
 * `ds` must be a live handle; `out_len` must be writable.
 */
enum DcnfStatus dcnf_dataset_sequence_length(const struct DcnfDataset *ds,
                                             size_t index,
                                             size_t *out_len);

/**
 * Load a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DcnfStatus dcnf_model_load(const char *path, struct DcnfModel **out);

/**
 * # Safety
 * `model` must come from [`dcnf_model_load`] and not have been freed. NULL is
 * ignored.
 */
void dcnf_model_free(struct DcnfModel *model);

/**
 * Number of labels, or 0 for NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t dcnf_model_num_labels(const struct DcnfModel *model);

/**
 * Features per position expected by the model, or 0 for NULL.
 *
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t dcnf_model_feature_dim(const struct DcnfModel *model);

/**
 * Name of label `index` as a newly allocated string.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum DcnfStatus dcnf_model_label_name(const struct DcnfModel *model, size_t index, char **out);

/**
 * Posterior marginals for one sequence.
 *
 * `features` is row-major `length × feature_dim`. On success `out` holds
 * `length × num_labels` probabilities, row-major. `out_capacity` is the
 * number of doubles `out` can take.
 *
 * # Safety
 * `features` must point to `length * feature_dim` doubles and `out` to
 * `out_capacity` writable doubles.
 */
enum DcnfStatus dcnf_model_predict_marginals(const struct DcnfModel *model,
                                             const double *features,
                                             size_t length,
                                             size_t feature_dim,
                                             double *out,
                                             size_t out_capacity);

/**
 * Evaluate a model on a labeled dataset; the metrics report is returned as
 * a newly allocated JSON string.
 *
 * # Safety
 * `model` and `ds` must be live handles; `out_json` must be writable.
 */
enum DcnfStatus dcnf_model_evaluate_json(const struct DcnfModel *model,
                                         const struct DcnfDataset *ds,
                                         char **out_json);

/**
 * Rank-based AUC of `scores` against `positive` (nonzero means positive).
 * Returns [`DcnfStatus::Undefined`] when either class is empty.
 *
 * # Safety
 * `scores` and `positive` must each point to `n` elements; `out` must be
 * writable.
 */
enum DcnfStatus dcnf_empirical_auc(const double *scores,
                                   const uint8_t *positive,
                                   size_t n,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPCNF_H */
