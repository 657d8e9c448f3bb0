#ifndef INTENT_EXPLAIN_H
#define INTENT_EXPLAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum IeStatus {
  IE_STATUS_OK = 0,
  IE_STATUS_NULL_POINTER = 1,
  IE_STATUS_INVALID_UTF8 = 2,
  IE_STATUS_IO = 3,
  IE_STATUS_PARSE = 4,
  IE_STATUS_INVALID_ARGUMENT = 5,
  IE_STATUS_BUFFER_TOO_SMALL = 6,
  IE_STATUS_INTERNAL = 7,
} IeStatus;

// Opaque handle to a loaded classifier.
typedef struct IeModel IeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until
// the next call into this library on the same thread.
const char *ie_last_error(void);

// Loads a model file written by `intent-explain train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum IeStatus ie_model_load(const char *path, struct IeModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from `ie_model_load` and not be used afterwards.
void ie_model_free(struct IeModel *model);

// # Safety
// `model` and `out` must be valid pointers.
enum IeStatus ie_model_num_classes(const struct IeModel *model, size_t *out);

// Label of class `index` as a new string (free with `ie_string_free`).
//
// # Safety
// `model` and `out` must be valid pointers.
enum IeStatus ie_model_label(const struct IeModel *model, size_t index, char **out);

// Class probabilities for `count` tokens, written to `probs` (at least
// `num_classes` entries). The argmax goes to `class_out` when non-NULL.
//
// # Safety
// `tokens` must point to `count` NUL-terminated strings; `probs` to
// `probs_len` doubles.
enum IeStatus ie_model_predict(const struct IeModel *model,
                               const char *const *tokens,
                               size_t count,
                               double *probs,
                               size_t probs_len,
                               size_t *class_out);

// Integrated-gradients token attributions (class average of absolute
// per-class attributions) with `steps` quadrature points, one per token.
//
// # Safety
// `tokens` must point to `count` NUL-terminated strings; `out` to
// `out_len` doubles.
enum IeStatus ie_model_integrated_gradients(const struct IeModel *model,
                                            const char *const *tokens,
                                            size_t count,
                                            size_t steps,
                                            double *out,
                                            size_t out_len);

// Annotates a CoNLL-U document and returns the corpus as JSONL (free with
// `ie_string_free`). Rejected and multi-intent sentences are skipped.
//
// # Safety
// `conllu` must be a NUL-terminated string and `out` a valid pointer.
enum IeStatus ie_annotate_conllu(const char *conllu, size_t max_len, char **out);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void ie_string_free(char *s);

// Token F1 between two 0/1 masks of length `len`.
//
// # Safety
// `pred` and `gold` must point to `len` bytes; `out` must be valid.
enum IeStatus ie_token_f1(const uint8_t *pred, const uint8_t *gold, size_t len, double *out);

// Fleiss' kappa of a row-major `items` x `categories` count table.
//
// # Safety
// `counts` must point to `items * categories` values; `out` must be valid.
enum IeStatus ie_fleiss_kappa(const size_t *counts, size_t items, size_t categories, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTENT_EXPLAIN_H */
