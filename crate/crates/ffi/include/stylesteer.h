/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef STYLESTEER_H
#define STYLESTEER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_ARGUMENT = 1,
  SS_STATUS_INVALID_UTF8 = 2,
  SS_STATUS_MISSING_FILE = 3,
  SS_STATUS_FORMAT = 4,
  SS_STATUS_INVALID_INPUT = 5,
  SS_STATUS_UNKNOWN_STYLE = 6,
  SS_STATUS_NUMERICAL = 7,
  SS_STATUS_IO = 8,
  SS_STATUS_PANIC = 9,
} SsStatus;

/**
 * A frozen model with its vocabulary.
 */
typedef struct SsModel SsModel;

/**
 * A loaded style-vector store.
 */
typedef struct SsStore SsStore;

/**
 * Inputs of [`ss_generate`].
 */
typedef struct SsGenerateParams {
  const char *prompt;
  const char *style;
  double lambda;
  uint64_t seed;
  uintptr_t max_new_tokens;
  /**
   * Ask for the style in the prompt instead of injecting a vector.
   */
  bool baseline;
  /**
   * Greedy decoding instead of top-8 sampling.
   */
  bool greedy;
} SsGenerateParams;

typedef struct SsOversteer {
  bool flagged;
  uintptr_t max_repeat_run;
  double distinct_ratio;
} SsOversteer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *ss_last_error(void);

/**
 * Loads a checkpoint with an embedded vocabulary.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsStatus ss_model_load(const char *path, struct SsModel **out);

/**
 * # Safety
 * `model` must come from [`ss_model_load`] and not be used afterwards.
 */
void ss_model_free(struct SsModel *model);

/**
 * Number of transformer blocks, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t ss_model_n_layers(const struct SsModel *model);

/**
 * Residual width, or 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t ss_model_d_model(const struct SsModel *model);

/**
 * Loads a style store written by `stylesteer stylevec`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SsStatus ss_store_load(const char *path, struct SsStore **out);

/**
 * # Safety
 * `store` must come from [`ss_store_load`] and not be used afterwards.
 */
void ss_store_free(struct SsStore *store);

/**
 * True when the store holds vectors for `style`.
 *
 * # Safety
 * `store` must be NULL or a live handle; `style` NULL or NUL-terminated.
 */
bool ss_store_has_style(const struct SsStore *store, const char *style);

/**
 * Generates a continuation with the style vector scaled by `lambda` at the
 * default layers, or with the prompt-suffix baseline. On success `*out_text`
 * owns a new string and `out_oversteer`, when not NULL, receives the report.
 *
 * # Safety
 * Handles must be live, `params` valid with NUL-terminated strings, and
 * `out_text` a valid pointer.
 */
enum SsStatus ss_generate(const struct SsModel *model,
                          const struct SsStore *store,
                          const struct SsGenerateParams *params,
                          char **out_text,
                          struct SsOversteer *out_oversteer);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void ss_string_free(char *s);

/**
 * Lexicon sentiment of `text` in [-1, 1].
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid pointer.
 */
enum SsStatus ss_sentiment(const char *text, double *out);

/**
 * Repetition report for `text`.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid pointer.
 */
enum SsStatus ss_detect_oversteer(const char *text, struct SsOversteer *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STYLESTEER_H */
