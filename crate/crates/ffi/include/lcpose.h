#ifndef LCPOSE_H
#define LCPOSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum LcpStatus {
  LCP_STATUS_OK = 0,
  LCP_STATUS_NULL_POINTER = 1,
  LCP_STATUS_INVALID_ARGUMENT = 2,
  LCP_STATUS_CONFIG = 3,
  LCP_STATUS_DATA = 4,
  LCP_STATUS_SCHEMA = 5,
  LCP_STATUS_IO = 6,
  LCP_STATUS_PARSE = 7,
  LCP_STATUS_UNDEFINED_METRIC = 8,
  LCP_STATUS_BUFFER_TOO_SMALL = 9,
  LCP_STATUS_PANIC = 10,
} LcpStatus;

/**
 * Loaded dataset.
 */
typedef struct LcpDataset LcpDataset;

/**
 * Loaded model.
 */
typedef struct LcpModel LcpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a model file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LcpStatus lcp_model_load(const char *path, struct LcpModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`lcp_model_load`] and not be used afterwards.
 */
void lcp_model_free(struct LcpModel *model);

/**
 * Part and attribute counts of a model.
 *
 * # Safety
 * `model` must be a live handle; the outputs must be writable.
 */
enum LcpStatus lcp_model_dims(const struct LcpModel *model,
                              uintptr_t *parts,
                              uintptr_t *attributes);

/**
 * Loads a dataset file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LcpStatus lcp_dataset_load(const char *path, struct LcpDataset **out);

/**
 * Releases a dataset; null is ignored.
 *
 * # Safety
 * `dataset` must come from [`lcp_dataset_load`] and not be used afterwards.
 */
void lcp_dataset_free(struct LcpDataset *dataset);

/**
 * Number of records.
 *
 * # Safety
 * `dataset` must be a live handle; `len` must be writable.
 */
enum LcpStatus lcp_dataset_len(const struct LcpDataset *dataset, uintptr_t *len);

/**
 * Joint inference on record `index`. Writes one candidate index per part
 * to `pose`, one value per attribute to `attributes`, and the score.
 *
 * # Safety
 * Handles must be live; `pose` and `attributes` must hold `pose_cap` and
 * `attr_cap` elements; `score` must be writable.
 */
enum LcpStatus lcp_infer(const struct LcpModel *model,
                         const struct LcpDataset *dataset,
                         uintptr_t index,
                         uintptr_t max_iters,
                         uintptr_t *pose,
                         uintptr_t pose_cap,
                         uintptr_t *attributes,
                         uintptr_t attr_cap,
                         double *score);

/**
 * Pairwise clustering F1 of two labelings of `n` items.
 *
 * # Safety
 * `predicted` and `truth` must hold `n` elements; `out` must be writable.
 */
enum LcpStatus lcp_pairwise_f1(const uintptr_t *predicted,
                               const uintptr_t *truth,
                               uintptr_t n,
                               double *out);

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *lcp_last_error_message(void);

/**
 * Library version, NUL-terminated, static.
 */
const char *lcp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCPOSE_H */
