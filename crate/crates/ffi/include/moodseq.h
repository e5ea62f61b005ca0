#ifndef MOODSEQ_H
#define MOODSEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MOODSEQ_NUM_CLASSES 5

typedef enum MoodseqStatus {
  MOODSEQ_STATUS_OK = 0,
  MOODSEQ_STATUS_NULL_POINTER = 1,
  MOODSEQ_STATUS_INVALID_ARGUMENT = 2,
  MOODSEQ_STATUS_FORMAT = 3,
  MOODSEQ_STATUS_IO = 4,
  MOODSEQ_STATUS_SHAPE = 5,
  MOODSEQ_STATUS_DIVERGED = 6,
  MOODSEQ_STATUS_PANIC = 7,
} MoodseqStatus;

typedef enum MoodseqModality {
  MOODSEQ_MODALITY_AUDIO = 0,
  MOODSEQ_MODALITY_TEXT = 1,
  MOODSEQ_MODALITY_BOTH = 2,
} MoodseqModality;

/**
 * Opaque handle to a loaded model.
 */
typedef struct MoodseqModel MoodseqModel;

/**
 * Input geometry of a loaded model.
 */
typedef struct MoodseqModelInfo {
  enum MoodseqModality modality;
  /**
   * Frames per audio window.
   */
  size_t timestep;
  /**
   * Tokens per text window.
   */
  size_t window;
  /**
   * Values per audio frame.
   */
  size_t features;
  /**
   * Valid token indices are `0..vocab_rows`.
   */
  size_t vocab_rows;
  size_t num_classes;
} MoodseqModelInfo;

/**
 * Patient-level outcome of [`moodseq_predict_files`].
 */
typedef struct MoodseqVote {
  uint32_t voted;
  size_t windows;
  uint32_t tally[MOODSEQ_NUM_CLASSES];
} MoodseqVote;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *moodseq_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *moodseq_last_error(void);

/**
 * Loads a checkpoint. On success `*out` owns a handle to release with
 * [`moodseq_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MoodseqStatus moodseq_model_load(const char *path, struct MoodseqModel **out);

/**
 * Releases a handle from [`moodseq_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`moodseq_model_load`] and not be used afterwards.
 */
void moodseq_model_free(struct MoodseqModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum MoodseqStatus moodseq_model_info(const struct MoodseqModel *model,
                                      struct MoodseqModelInfo *out);

/**
 * Class probabilities for `batch` windows, written to `probs` as
 * `batch × 5` floats. `frames` holds `batch × timestep × 73` unstandardised
 * voiced-frame features (null for text models); `tokens` holds
 * `batch × window` vocabulary indices (null for audio models).
 *
 * # Safety
 * Non-null buffers must have the lengths stated above.
 */
enum MoodseqStatus moodseq_predict(const struct MoodseqModel *model,
                                   const float *frames,
                                   const uint32_t *tokens,
                                   size_t batch,
                                   float *probs);

/**
 * Scores every window of one subject's files and votes. Either path may be
 * null when the model does not read that modality.
 *
 * # Safety
 * Non-null paths must be NUL-terminated; `out` must be writable.
 */
enum MoodseqStatus moodseq_predict_files(const struct MoodseqModel *model,
                                         const char *audio_path,
                                         const char *transcript_path,
                                         uint64_t seed,
                                         struct MoodseqVote *out);

/**
 * Severity class (0 healthy … 4 severe) and binary view of a PHQ-8 score.
 *
 * # Safety
 * `severity` and `significant` must be writable.
 */
enum MoodseqStatus moodseq_phq_to_label(int32_t score, uint32_t *severity, bool *significant);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOODSEQ_H */
