#ifndef WEAKLABEL_H
#define WEAKLABEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WlStatus {
  WL_STATUS_OK = 0,
  WL_STATUS_NULL_POINTER = 1,
  WL_STATUS_INVALID_ARGUMENT = 2,
  WL_STATUS_INVALID_UTF8 = 3,
  WL_STATUS_INGEST = 10,
  WL_STATUS_DATASET = 11,
  WL_STATUS_SPLIT = 12,
  WL_STATUS_FEATURE = 13,
  WL_STATUS_IMAGE = 14,
  WL_STATUS_CLASSIFIER = 15,
  WL_STATUS_NEURAL = 16,
  WL_STATUS_EVAL = 17,
  WL_STATUS_SYNTH = 18,
  WL_STATUS_IO = 19,
  WL_STATUS_PANIC = 99,
} WlStatus;

typedef enum WlWeightMode {
  // `w_c = C · n_c / N`.
  WL_WEIGHT_MODE_PROPORTIONAL = 0,
  // `w_c = N / (C · n_c)`.
  WL_WEIGHT_MODE_INVERSE = 1,
} WlWeightMode;

// Confusion matrix accumulated one prediction at a time.
typedef struct WlConfusion WlConfusion;

// Parsed detection records.
typedef struct WlDetections WlDetections;

// A classic classifier loaded from a `model.json` file.
typedef struct WlModel WlModel;

// One detection box. `x`/`y` may be negative.
typedef struct WlDetection {
  size_t frame;
  int64_t x;
  int64_t y;
  int64_t w;
  int64_t h;
  double score;
} WlDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a
// successful call. Valid until the next call into this library.
const char *wl_last_error(void);

// Library version as a static NUL-terminated string.
const char *wl_version(void);

// Length of the feature vector produced by [`wl_extract_features`].
size_t wl_feature_dim(void);

// Hu, Haralick and color-histogram features of an 8-bit image with the
// default descriptor settings. `pixels` holds `height` rows of
// `width · channels` bytes; `channels` is 1 or 3. `out` must hold
// `wl_feature_dim()` doubles.
//
// # Safety
// `pixels` must point to `width · height · channels` readable bytes and
// `out` to `out_len` writable doubles.
enum WlStatus wl_extract_features(const uint8_t *pixels, uint32_t width, uint32_t height, uint8_t channels, double *out, size_t out_len);

// Parses a JSON-lines detection stream into a new handle.
//
// # Safety
// `jsonl` must be a NUL-terminated string and `out` a writable pointer.
enum WlStatus wl_detections_parse(const char *jsonl, struct WlDetections **out);

// New handle keeping only the highest-scoring box of every (video, frame),
// ordered by video id then frame.
//
// # Safety
// `dets` must be a live handle and `out` a writable pointer.
enum WlStatus wl_detections_best(const struct WlDetections *dets, struct WlDetections **out);

// Number of records; 0 for a NULL handle.
//
// # Safety
// `dets` must be NULL or a live handle.
size_t wl_detections_len(const struct WlDetections *dets);

// Copies record `index` into `out`.
//
// # Safety
// `dets` must be a live handle and `out` a writable pointer.
enum WlStatus wl_detections_get(const struct WlDetections *dets, size_t index, struct WlDetection *out);

// Video id of record `index`, or NULL when out of range. Owned by the
// handle.
//
// # Safety
// `dets` must be NULL or a live handle.
const char *wl_detections_video_id(const struct WlDetections *dets, size_t index);

// # Safety
// `dets` must be NULL or a handle not yet freed.
void wl_detections_free(struct WlDetections *dets);

// Loads a classic model saved by `weaklabel fit`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum WlStatus wl_model_load(const char *path, struct WlModel **out);

// Feature count the model expects; 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t wl_model_n_features(const struct WlModel *model);

// Number of classes; 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t wl_model_n_classes(const struct WlModel *model);

// Name of class `index`, or NULL when out of range. Owned by the handle.
//
// # Safety
// `model` must be NULL or a live handle.
const char *wl_model_class_name(const struct WlModel *model, size_t index);

// Predicts `rows` row-major feature vectors of `cols` values and writes one
// class index per row to `out`.
//
// # Safety
// `features` must hold `rows · cols` doubles and `out` `rows` writable
// `size_t`s.
enum WlStatus wl_model_predict(const struct WlModel *model, const double *features, size_t rows, size_t cols, size_t *out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void wl_model_free(struct WlModel *model);

// Empty `n_classes × n_classes` confusion matrix, or NULL if `n_classes`
// is 0.
struct WlConfusion *wl_confusion_new(size_t n_classes);

// Counts one (true class, predicted class) pair.
//
// # Safety
// `cm` must be a live handle.
enum WlStatus wl_confusion_add(struct WlConfusion *cm, size_t truth, size_t pred);

// Count in row `truth`, column `pred`; 0 when out of range.
//
// # Safety
// `cm` must be NULL or a live handle.
uint64_t wl_confusion_get(const struct WlConfusion *cm, size_t truth, size_t pred);

// Overall accuracy and mean per-class recall over classes with at least one
// true sample. Either output pointer may be NULL.
//
// # Safety
// `cm` must be a live handle; non-NULL outputs must be writable.
enum WlStatus wl_confusion_metrics(const struct WlConfusion *cm, double *accuracy, double *mean_class_accuracy);

// # Safety
// `cm` must be NULL or a handle not yet freed.
void wl_confusion_free(struct WlConfusion *cm);

// Per-class loss weights from training labels. Classes absent from
// `labels` get weight 0.
//
// # Safety
// `labels` must hold `n` values and `out` `n_classes` writable doubles.
enum WlStatus wl_class_weights(const size_t *labels, size_t n, size_t n_classes, enum WlWeightMode mode, double *out);

// Summed weighted softmax cross-entropy of a row-major `batch × classes`
// logit matrix and its gradient. `weights` may be NULL for unit weights;
// `grad` may be NULL when only the loss is needed.
//
// # Safety
// `logits` and a non-NULL `grad` must hold `batch · classes` doubles,
// `labels` `batch` values and a non-NULL `weights` `classes` values.
enum WlStatus wl_weighted_ce_loss(const double *logits, size_t batch, size_t classes, const size_t *labels, const double *weights, double *loss, double *grad);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEAKLABEL_H */
