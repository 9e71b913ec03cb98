#ifndef SYNTHATTR_H
#define SYNTHATTR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum SaStatus {
  SA_STATUS_OK = 0,
  SA_STATUS_NULL_POINTER = 1,
  SA_STATUS_INVALID_ARGUMENT = 2,
  // Bad configuration or parameters inside the library.
  SA_STATUS_CONFIG = 3,
  // Unreadable or malformed input data.
  SA_STATUS_DATA = 4,
  // Non-finite values or a failed numeric routine.
  SA_STATUS_NUMERIC = 5,
  // Output buffer too small; the required size was written.
  SA_STATUS_BUFFER_TOO_SMALL = 6,
  SA_STATUS_PANIC = 7,
} SaStatus;

// A mono waveform with its sample rate.
typedef struct SaClip SaClip;

// A loaded model (network or classical baseline).
typedef struct SaModel SaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if the last
// call succeeded. Valid until the next call into the library on this
// thread.
const char *sa_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sa_version(void);

// Loads a checkpoint written by `synthattr train`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SaStatus sa_model_load(const char *path, struct SaModel **out);

// Releases a model; null is ignored.
//
// # Safety
// `model` must come from [`sa_model_load`] and not be used afterwards.
void sa_model_free(struct SaModel *model);

// Number of classes, or 0 for a null model.
//
// # Safety
// `model` must be null or a live handle.
size_t sa_model_num_classes(const struct SaModel *model);

// Embedding width, or 0 for classical models and null.
//
// # Safety
// `model` must be null or a live handle.
size_t sa_model_embedding_dim(const struct SaModel *model);

// Clip length the model was trained on, in seconds; 0 for null.
//
// # Safety
// `model` must be null or a live handle.
double sa_model_clip_seconds(const struct SaModel *model);

// Predicted class of a clip. The clip is resampled and tiled or trimmed
// to the model's clip length first.
//
// # Safety
// `model` and `clip` must be live handles; `out_label` must be writable.
enum SaStatus sa_model_predict(const struct SaModel *model,
                               const struct SaClip *clip,
                               uint32_t *out_label);

// Writes the embedding of a clip into `out` (capacity `cap` values) and
// its width into `out_len`. With a too-small buffer nothing is copied,
// `out_len` still receives the width and `BufferTooSmall` is returned.
//
// # Safety
// `model` and `clip` must be live handles; `out` must hold `cap` values
// (it may be null when `cap` is 0); `out_len` must be writable.
enum SaStatus sa_model_embed(const struct SaModel *model,
                             const struct SaClip *clip,
                             double *out,
                             size_t cap,
                             size_t *out_len);

// Reads a 16-bit PCM WAV file, downmixed to mono at its native rate.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SaStatus sa_clip_load_wav(const char *path, struct SaClip **out);

// Copies `len` samples in `[-1, 1]` into a new clip.
//
// # Safety
// `samples` must point to `len` floats; `out` must be writable.
enum SaStatus sa_clip_from_samples(const float *samples,
                                   size_t len,
                                   uint32_t sample_rate,
                                   struct SaClip **out);

// New clip resampled to 16 kHz and tiled or trimmed to `seconds`.
//
// # Safety
// `clip` must be a live handle; `out` must be writable.
enum SaStatus sa_clip_canonicalize(const struct SaClip *clip, double seconds, struct SaClip **out);

// Releases a clip; null is ignored.
//
// # Safety
// `clip` must come from this library and not be used afterwards.
void sa_clip_free(struct SaClip *clip);

// Number of samples, or 0 for null.
//
// # Safety
// `clip` must be null or a live handle.
size_t sa_clip_len(const struct SaClip *clip);

// Sample rate in Hz, or 0 for null.
//
// # Safety
// `clip` must be null or a live handle.
uint32_t sa_clip_sample_rate(const struct SaClip *clip);

// Borrowed pointer to the samples, valid while the clip lives; null for
// a null clip.
//
// # Safety
// `clip` must be null or a live handle.
const float *sa_clip_samples(const struct SaClip *clip);

// MFCC matrix of a clip, row-major `frames x n_mfcc`. The shape is always
// written to `out_frames` / `out_coeffs`; pass `cap = 0` to query it.
//
// # Safety
// `clip` must be a live handle; `out` must hold `cap` values (it may be
// null when `cap` is 0); `out_frames` and `out_coeffs` must be writable.
enum SaStatus sa_mfcc(const struct SaClip *clip,
                      size_t n_mfcc,
                      size_t n_mels,
                      size_t frame_length,
                      size_t hop_length,
                      double *out,
                      size_t cap,
                      size_t *out_frames,
                      size_t *out_coeffs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SYNTHATTR_H */
