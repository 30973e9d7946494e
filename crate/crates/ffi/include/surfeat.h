#ifndef SURFEAT_H
#define SURFEAT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_INVALID_DATA = 3,
  SF_STATUS_IO = 4,
  SF_STATUS_ABORTED = 5,
  /**
   * The output buffer is too small; the required length was written.
   */
  SF_STATUS_BUFFER_TOO_SMALL = 6,
  SF_STATUS_PANIC = 7,
} SfStatus;

/**
 * A point cloud with optional features and labels.
 */
typedef struct SfCloud SfCloud;

/**
 * A trained point-cloud model.
 */
typedef struct SfModel SfModel;

typedef struct SfClassificationMetrics {
  /**
   * Vessel (label 0) accuracy; NaN when the class is absent.
   */
  double accuracy_v;
  /**
   * Aneurysm (label 1) accuracy; NaN when the class is absent.
   */
  double accuracy_a;
  double f1;
} SfClassificationMetrics;

typedef struct SfSegmentationMetrics {
  /**
   * Per class, NaN when the class is absent from both masks.
   */
  double iou[2];
  double dsc[2];
} SfSegmentationMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *sf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Reads an SFPC file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_cloud_read(const char *path, struct SfCloud **out);

/**
 * # Safety
 * `cloud` must come from [`sf_cloud_read`] and not be used afterwards.
 */
void sf_cloud_free(struct SfCloud *cloud);

/**
 * Point count and feature width (0 without features).
 *
 * # Safety
 * `cloud` must be a live handle; the out pointers may be null.
 */
enum SfStatus sf_cloud_info(const struct SfCloud *cloud, uintptr_t *points, uintptr_t *feature_dim);

/**
 * Loads `config.kv` and `model.sfck` from a run directory written by `surfeat train`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_model_load(const char *dir, struct SfModel **out);

/**
 * # Safety
 * `model` must come from [`sf_model_load`] and not be used afterwards.
 */
void sf_model_free(struct SfModel *model);

/**
 * Predicted labels: one per object for classifiers, one per point for
 * segmenters. `written` receives the label count; when `capacity` is too
 * small nothing is copied and `BufferTooSmall` is returned.
 *
 * # Safety
 * Handles must be live; `labels` must hold `capacity` bytes; `written` must be valid.
 */
enum SfStatus sf_model_predict(const struct SfModel *model,
                               const struct SfCloud *cloud,
                               uint8_t *labels,
                               uintptr_t capacity,
                               uintptr_t *written);

/**
 * 1 for a classifier, 2 for a segmenter.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum SfStatus sf_model_task(const struct SfModel *model, uint32_t *task);

/**
 * Per-class accuracy and F1 (aneurysm positive) over binary labels.
 *
 * # Safety
 * Both arrays must hold `len` bytes; `out` must be valid.
 */
enum SfStatus sf_metrics_classification(const uint8_t *predictions,
                                        const uint8_t *targets,
                                        uintptr_t len,
                                        struct SfClassificationMetrics *out);

/**
 * IoU and DSC per class over pooled points.
 *
 * # Safety
 * Both arrays must hold `len` bytes; `out` must be valid.
 */
enum SfStatus sf_metrics_segmentation(const uint8_t *predictions,
                                      const uint8_t *targets,
                                      uintptr_t len,
                                      struct SfSegmentationMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SURFEAT_H */
