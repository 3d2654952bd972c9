#ifndef NIGHTSEG_H
#define NIGHTSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  NS_STATUS_FILE_NOT_FOUND = 3,
  NS_STATUS_UNSUPPORTED_FORMAT = 4,
  NS_STATUS_CORRUPT_IMAGE = 5,
  NS_STATUS_AMBIGUOUS_MASK = 6,
  NS_STATUS_IO = 7,
  NS_STATUS_DIMENSION_MISMATCH = 8,
  NS_STATUS_DEGENERATE_INPUT = 9,
  NS_STATUS_EMPTY_INPUT = 10,
  NS_STATUS_INVALID_MODEL = 11,
  NS_STATUS_VIEW_BELOW_HORIZON = 12,
  NS_STATUS_BUFFER_TOO_SMALL = 13,
  NS_STATUS_PANIC = 99,
} NsStatus;

/**
 * Opaque RGB image.
 */
typedef struct NsImage NsImage;

/**
 * Opaque sky/cloud mask.
 */
typedef struct NsMask NsMask;

/**
 * Parameters of the superpixel pipeline.
 */
typedef struct NsSegmentParams {
  size_t superpixels;
  double compactness;
  size_t max_iterations;
  /**
   * Nonzero: cluster superpixel means with unit weights.
   */
  uint8_t unweighted;
} NsSegmentParams;

typedef struct NsMetrics {
  uint64_t true_pos;
  uint64_t true_neg;
  uint64_t false_pos;
  uint64_t false_neg;
  double precision;
  double recall;
  double fscore;
  double error_rate;
} NsMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread; empty if nothing has failed.
 */
const char *ns_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ns_version(void);

/**
 * Reference defaults: 100 superpixels, compactness 10, 10 iterations,
 * pixel-count weighting.
 */
struct NsSegmentParams ns_segment_params_default(void);

/**
 * Loads a PNG or JPEG file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NsStatus ns_image_load(const char *path, struct NsImage **out);

/**
 * Builds an image from `width * height * 3` interleaved RGB bytes, row-major.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum NsStatus ns_image_from_rgb(size_t width,
                                size_t height,
                                const uint8_t *data,
                                size_t len,
                                struct NsImage **out);

/**
 * # Safety
 * `img` must be null or a live handle.
 */
size_t ns_image_width(const struct NsImage *img);

/**
 * # Safety
 * `img` must be null or a live handle.
 */
size_t ns_image_height(const struct NsImage *img);

/**
 * # Safety
 * `img` must be null or a handle not yet freed.
 */
void ns_image_free(struct NsImage *img);

/**
 * Superpixel segmentation on the named channel (`"r-minus-b"`, `"c14"`, ...).
 * `params` may be null for the defaults.
 *
 * # Safety
 * Pointers must be valid; `channel` NUL-terminated; `out` writable.
 */
enum NsStatus ns_segment(const struct NsImage *img,
                         const char *channel,
                         const struct NsSegmentParams *params,
                         struct NsMask **out);

/**
 * Otsu threshold on the red-blue difference.
 *
 * # Safety
 * `img` must be a live handle; `out` writable.
 */
enum NsStatus ns_segment_otsu_rb(const struct NsImage *img, struct NsMask **out);

/**
 * Fixed luminance threshold in [0, 255]; `gray >= threshold` is cloud.
 *
 * # Safety
 * `img` must be a live handle; `out` writable.
 */
enum NsStatus ns_segment_fixed_gray(const struct NsImage *img,
                                    double threshold,
                                    struct NsMask **out);

/**
 * Loads a binary mask image (luminance >= 128 is cloud).
 *
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum NsStatus ns_mask_load(const char *path, struct NsMask **out);

/**
 * Writes the mask as an 8-bit PNG with 0 for sky and 255 for cloud.
 *
 * # Safety
 * `mask` must be a live handle; `path` NUL-terminated.
 */
enum NsStatus ns_mask_save(const struct NsMask *mask, const char *path);

/**
 * # Safety
 * `mask` must be null or a live handle.
 */
size_t ns_mask_width(const struct NsMask *mask);

/**
 * # Safety
 * `mask` must be null or a live handle.
 */
size_t ns_mask_height(const struct NsMask *mask);

/**
 * # Safety
 * `mask` must be null or a live handle.
 */
size_t ns_mask_cloud_count(const struct NsMask *mask);

/**
 * Copies the row-major labels (0 sky, 1 cloud) into `buf`, which must hold
 * at least width * height bytes.
 *
 * # Safety
 * `mask` must be a live handle; `buf` must point to `len` writable bytes.
 */
enum NsStatus ns_mask_copy_labels(const struct NsMask *mask, uint8_t *buf, size_t len);

/**
 * # Safety
 * `mask` must be null or a handle not yet freed.
 */
void ns_mask_free(struct NsMask *mask);

/**
 * Confusion counts and scores of `pred` against `gt`.
 *
 * # Safety
 * Both masks must be live handles; `out` writable.
 */
enum NsStatus ns_evaluate(const struct NsMask *pred,
                          const struct NsMask *gt,
                          struct NsMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NIGHTSEG_H */
