#ifndef MIXSVS_H
#define MIXSVS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MixsvsPlanMode {
  MIXSVS_PLAN_MODE_NAIVE = 0,
  MIXSVS_PLAN_MODE_OVERLAPPED = 1,
} MixsvsPlanMode;

typedef enum MixsvsStatus {
  MIXSVS_STATUS_OK = 0,
  MIXSVS_STATUS_NULL_POINTER = 1,
  MIXSVS_STATUS_UTF8 = 2,
  MIXSVS_STATUS_DIMENSION = 3,
  MIXSVS_STATUS_PARAMETER = 4,
  MIXSVS_STATUS_DEGENERATE_INPUT = 5,
  MIXSVS_STATUS_NUMERIC = 6,
  MIXSVS_STATUS_FORMAT = 7,
  MIXSVS_STATUS_ALIGNMENT = 8,
  MIXSVS_STATUS_INPUT = 9,
  MIXSVS_STATUS_RANGE = 10,
  MIXSVS_STATUS_VOCAB = 11,
  MIXSVS_STATUS_CAPABILITY = 12,
  MIXSVS_STATUS_CONFIG = 13,
  MIXSVS_STATUS_IO = 14,
  MIXSVS_STATUS_PANIC = 15,
} MixsvsStatus;

/**
 * A synthesized mel-spectrogram, row-major `frames x bins`.
 */
typedef struct MixsvsMel MixsvsMel;

/**
 * A loaded or initialised model.
 */
typedef struct MixsvsModel MixsvsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *mixsvs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mixsvs_version(void);

/**
 * Loads a checkpoint (`.ten1` plus its `.json` config sidecar).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MixsvsStatus mixsvs_model_load(const char *path, struct MixsvsModel **out);

/**
 * Initialises a model from a JSON model config, or the default config when
 * `config_json` is NULL.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; `out` must be writable.
 */
enum MixsvsStatus mixsvs_model_init(const char *config_json,
                                    uint64_t seed,
                                    struct MixsvsModel **out);

/**
 * # Safety
 * `model` and `path` must be valid.
 */
enum MixsvsStatus mixsvs_model_save(const struct MixsvsModel *model, const char *path);

/**
 * Releases a model; NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void mixsvs_model_free(struct MixsvsModel *model);

/**
 * Segment length in frames, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or valid.
 */
size_t mixsvs_model_seq_len(const struct MixsvsModel *model);

/**
 * Number of trainable scalars, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or valid.
 */
size_t mixsvs_model_param_count(const struct MixsvsModel *model);

/**
 * Synthesizes a score given as JSON text.
 *
 * # Safety
 * `model` and `score_json` must be valid; `out` must be writable.
 */
enum MixsvsStatus mixsvs_synthesize_score(const struct MixsvsModel *model,
                                          const char *score_json,
                                          enum MixsvsPlanMode mode,
                                          size_t overlap,
                                          size_t k,
                                          struct MixsvsMel **out);

/**
 * Synthesizes from per-frame pitch and phoneme ids, `frames` of each.
 *
 * # Safety
 * The id arrays must hold `frames` elements; `out` must be writable.
 */
enum MixsvsStatus mixsvs_synthesize_ids(const struct MixsvsModel *model,
                                        const uint32_t *pitch_ids,
                                        const uint32_t *phoneme_ids,
                                        size_t frames,
                                        enum MixsvsPlanMode mode,
                                        size_t overlap,
                                        struct MixsvsMel **out);

/**
 * Diagonal constancy of the identity probe of one block's token mixer.
 *
 * # Safety
 * `model` must be valid and `out` writable.
 */
enum MixsvsStatus mixsvs_probe_constancy(const struct MixsvsModel *model,
                                         size_t block,
                                         double *out);

/**
 * # Safety
 * `mel` must be NULL or valid.
 */
size_t mixsvs_mel_frames(const struct MixsvsMel *mel);

/**
 * # Safety
 * `mel` must be NULL or valid.
 */
size_t mixsvs_mel_bins(const struct MixsvsMel *mel);

/**
 * Row-major values, owned by `mel`.
 *
 * # Safety
 * `mel` must be NULL or valid; the pointer dies with `mel`.
 */
const float *mixsvs_mel_data(const struct MixsvsMel *mel);

/**
 * Writes the spectrogram as a MEL1 file.
 *
 * # Safety
 * `mel` and `path` must be valid.
 */
enum MixsvsStatus mixsvs_mel_write(const struct MixsvsMel *mel, const char *path);

/**
 * # Safety
 * `mel` must come from this library and not be used afterwards.
 */
void mixsvs_mel_free(struct MixsvsMel *mel);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIXSVS_H */
