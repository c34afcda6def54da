#ifndef DPNET_H
#define DPNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum DpnStatus {
  DPN_STATUS_OK = 0,
  DPN_STATUS_NULL_POINTER = 1,
  DPN_STATUS_INVALID_ARGUMENT = 2,
  DPN_STATUS_SHAPE = 3,
  DPN_STATUS_IO = 4,
  DPN_STATUS_CHECKPOINT = 5,
  DPN_STATUS_NON_FINITE = 6,
  DPN_STATUS_BUFFER_TOO_SMALL = 7,
  DPN_STATUS_PANIC = 8,
} DpnStatus;

// Opaque model handle. Create with [`dpn_model_build`] or
// [`dpn_model_load`], release with [`dpn_model_free`].
typedef struct DpnModel DpnModel;

// Confusion counts for one positive class.
typedef struct DpnConfusion {
  uint64_t tp;
  uint64_t fp;
  uint64_t tn;
  uint64_t fn_;
  double precision;
  double recall;
  double accuracy;
  double f1;
} DpnConfusion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none. The
// pointer stays valid until the next failing call on the same thread.
const char *dpn_last_error(void);

// Library version as a static NUL-terminated string.
const char *dpn_version(void);

// Builds a freshly initialized model from its text spec, e.g.
// `family=udnet;in=1;t=3`. Omitted keys take the family defaults.
//
// # Safety
// `spec` must be a NUL-terminated string and `out` a writable pointer.
enum DpnStatus dpn_model_build(const char *spec, uint64_t seed, struct DpnModel **out);

// Loads a checkpoint written by the CLI or [`dpn_model_save`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum DpnStatus dpn_model_load(const char *path, struct DpnModel **out);

// Writes an inference checkpoint (no optimizer state).
//
// # Safety
// `model` must come from this library and `path` be a NUL-terminated string.
enum DpnStatus dpn_model_save(const struct DpnModel *model, const char *path);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void dpn_model_free(struct DpnModel *model);

// Total number of trainable parameters.
//
// # Safety
// `model` must come from this library and `out` be writable.
enum DpnStatus dpn_model_param_count(const struct DpnModel *model, size_t *out);

// Writes the model's text spec into `buf` (NUL-terminated). `needed`
// receives the full length including the terminator.
//
// # Safety
// `buf` must hold `cap` bytes (may be null when `cap` is 0).
enum DpnStatus dpn_model_spec(const struct DpnModel *model, char *buf, size_t cap, size_t *needed);

// Number of output values for an `[n, c, h, w]` input: `n * classes` for
// the classifier, `n * h * w` for the pixel-wise heads.
//
// # Safety
// `model` must come from this library and `out` be writable.
enum DpnStatus dpn_model_output_len(const struct DpnModel *model,
                                    size_t n,
                                    size_t c,
                                    size_t h,
                                    size_t w,
                                    size_t *out);

// Eval-mode forward pass on a row-major `[n, c, h, w]` batch. Writes class
// logits, foreground probabilities or a density map (in object counts per
// pixel) depending on the family.
//
// # Safety
// `input` must hold `n*c*h*w` floats and `output` `output_len` floats.
enum DpnStatus dpn_model_forward(const struct DpnModel *model,
                                 const float *input,
                                 size_t n,
                                 size_t c,
                                 size_t h,
                                 size_t w,
                                 float *output,
                                 size_t output_len);

// Confusion counts and derived ratios of `pred` against `truth` for class
// `positive`. Ratios with a zero denominator are 0.
//
// # Safety
// Both arrays must hold `len` entries; `out` must be writable.
enum DpnStatus dpn_confusion(const uint32_t *pred,
                             const uint32_t *truth,
                             size_t len,
                             uint32_t positive,
                             struct DpnConfusion *out);

// Area under the ROC curve; ties count one half. `labels` are 0 or 1.
//
// # Safety
// Both arrays must hold `len` entries; `out` must be writable.
enum DpnStatus dpn_roc_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

// Dice coefficient of two binary masks; two empty masks score 1.
//
// # Safety
// Both arrays must hold `len` entries; `out` must be writable.
enum DpnStatus dpn_dice(const double *pred, const double *truth, size_t len, double *out);

// Mean squared error.
//
// # Safety
// Both arrays must hold `len` entries; `out` must be writable.
enum DpnStatus dpn_mse(const double *pred, const double *truth, size_t len, double *out);

// Density target for `n_dots` annotations given as interleaved `x, y`
// pixel coordinates. Writes `width * height` row-major values.
//
// # Safety
// `dots` must hold `2 * n_dots` values and `out` `out_len` values.
enum DpnStatus dpn_density_target(const double *dots,
                                  size_t n_dots,
                                  size_t width,
                                  size_t height,
                                  double sigma,
                                  double *out,
                                  size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPNET_H */
