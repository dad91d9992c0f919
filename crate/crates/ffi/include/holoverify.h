#ifndef HOLOVERIFY_H
#define HOLOVERIFY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum HvStatus {
  HV_STATUS_OK = 0,
  HV_STATUS_NULL_POINTER = 1,
  HV_STATUS_INVALID_ARGUMENT = 2,
  HV_STATUS_IO = 3,
  HV_STATUS_SHAPE = 4,
  HV_STATUS_DEGENERATE_EMBEDDING = 5,
  HV_STATUS_CHECKPOINT = 6,
  HV_STATUS_PARSE = 7,
  HV_STATUS_PANIC = 8,
} HvStatus;

typedef enum HvStrategy {
  HV_STRATEGY_WHOLE = 0,
  HV_STRATEGY_CUMULATIVE = 1,
} HvStrategy;

typedef enum HvVerdict {
  HV_VERDICT_ORIGINAL = 0,
  HV_VERDICT_ATTACK = 1,
} HvVerdict;

// Opaque calibrated-threshold handle.
typedef struct HvCalibration HvCalibration;

// Opaque encoder handle.
typedef struct HvModel HvModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. Valid until the next failing call.
const char *hv_last_error(void);

// Library version as a static NUL-terminated string.
const char *hv_version(void);

// Loads a checkpoint written by `holoverify train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HvStatus hv_model_load(const char *path, struct HvModel **out);

// # Safety
// `model` must come from [`hv_model_load`] and not be used afterwards; null is ignored.
void hv_model_free(struct HvModel *model);

// Embedding length of the model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t hv_model_embedding_dim(const struct HvModel *model);

// Embeds one interleaved RGB8 ROI image (row-major, `width * height * 3` bytes).
//
// # Safety
// `rgb` must hold `width * height * 3` bytes and `out` `out_len` floats.
enum HvStatus hv_model_embed_rgb(const struct HvModel *model,
                                 const uint8_t *rgb,
                                 uint32_t width,
                                 uint32_t height,
                                 float *out,
                                 size_t out_len);

// Mean pairwise cosine distance of `n_frames` embeddings of length `dim`.
//
// # Safety
// `embeddings` must hold `n_frames * dim` floats and `out_score` be valid.
enum HvStatus hv_video_score(const float *embeddings,
                             size_t n_frames,
                             size_t dim,
                             double *out_score);

// Calibrates a threshold on `n` validation scores; `labels[i]` is 1 for attack, 0 for original.
//
// # Safety
// `scores` and `labels` must hold `n` elements and `out` be valid.
enum HvStatus hv_calibrate(const double *scores,
                           const uint8_t *labels,
                           size_t n,
                           enum HvStrategy strategy,
                           struct HvCalibration **out);

// Loads a calibration file written by `holoverify calibrate`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum HvStatus hv_calibration_load(const char *path, struct HvCalibration **out);

// # Safety
// `cal` must come from this library and not be used afterwards; null is ignored.
void hv_calibration_free(struct HvCalibration *cal);

// Calibrated threshold, or NaN for a null handle.
//
// # Safety
// `cal` must be null or a live handle.
double hv_calibration_threshold(const struct HvCalibration *cal);

// Validation F-score reached by the threshold, or NaN for a null handle.
//
// # Safety
// `cal` must be null or a live handle.
double hv_calibration_fscore(const struct HvCalibration *cal);

// Verdict for a precomputed clip score.
//
// # Safety
// `cal` must be a live handle and `out` valid.
enum HvStatus hv_decide(const struct HvCalibration *cal, double score, enum HvVerdict *out);

// Streaming decision over `n_frames` embeddings; writes the verdict and the frame index it was taken at.
//
// # Safety
// `embeddings` must hold `n_frames * dim` floats; `cal`, `out` and `out_stop_index` must be valid.
enum HvStatus hv_decide_cumulative(const struct HvCalibration *cal,
                                   const float *embeddings,
                                   size_t n_frames,
                                   size_t dim,
                                   size_t min_buffer,
                                   enum HvVerdict *out,
                                   size_t *out_stop_index);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOLOVERIFY_H */
