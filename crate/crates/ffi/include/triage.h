#ifndef TRIAGE_H
#define TRIAGE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes shared with the CLI exit codes.
 */
typedef enum TriageStatus {
  TRIAGE_OK = 0,
  TRIAGE_USAGE_ERROR = 2,
  TRIAGE_DATA_ERROR = 3,
  TRIAGE_NUMERIC_ERROR = 4,
  TRIAGE_FORMAT_ERROR = 5,
} TriageStatus;

/**
 * Loaded model plus the preprocessing assets needed to score raw text.
 */
typedef struct TriagePipeline TriagePipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Open a pipeline from a checkpoint and companion files. `graph_path` is
 * required unless the checkpoint is encoder-only; the remaining paths may
 * be null for bundled/empty defaults. On success writes a handle to `out`.
 *
 * # Safety
 * `checkpoint_path` and `out` must be valid pointers; path arguments must
 * be null or valid NUL-terminated strings.
 */
enum TriageStatus triage_pipeline_open(const char *checkpoint_path,
                                       const char *graph_path,
                                       const char *imported_path,
                                       const char *stoplist_path,
                                       const char *emoji_map_path,
                                       const char *gazetteer_path,
                                       struct TriagePipeline **out);

/**
 * Release a pipeline handle. Null is a no-op.
 *
 * # Safety
 * `pipeline` must be null or a pointer returned by `triage_pipeline_open`
 * that has not been freed yet.
 */
void triage_pipeline_free(struct TriagePipeline *pipeline);

/**
 * Number of labels the pipeline scores.
 *
 * # Safety
 * `pipeline` must be a live handle from `triage_pipeline_open`.
 */
uintptr_t triage_pipeline_num_labels(const struct TriagePipeline *pipeline);

/**
 * Name of label `index` as a newly allocated string (free with
 * `triage_string_free`), or null when out of range.
 *
 * # Safety
 * `pipeline` must be a live handle from `triage_pipeline_open`.
 */
char *triage_pipeline_label_name(const struct TriagePipeline *pipeline, uintptr_t index);

/**
 * Score one tweet. Writes `num_labels` probabilities into `probs_out` and,
 * when `priority_out` is non-null, the maximum probability as a priority
 * score. For checkpoints with an imported encoder the `tweet_id` selects
 * the stored vector.
 *
 * # Safety
 * `pipeline` must be a live handle; `tweet_id` and `text` must be valid
 * NUL-terminated strings; `probs_out` must point to at least
 * `triage_pipeline_num_labels(pipeline)` doubles.
 */
enum TriageStatus triage_pipeline_predict(const struct TriagePipeline *pipeline,
                                          const char *tweet_id,
                                          const char *text,
                                          double *probs_out,
                                          double *priority_out);

/**
 * The most recent error message on this thread as a newly allocated string
 * (free with `triage_string_free`), or null when no error has occurred.
 */
char *triage_last_error_message(void);

/**
 * Free a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be null or a pointer returned by a `triage_*` function that
 * allocates, and must not have been freed already.
 */
void triage_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TRIAGE_H */
