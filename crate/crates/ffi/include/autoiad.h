#ifndef AUTOIAD_H
#define AUTOIAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AutoiadStatus {
  AUTOIAD_STATUS_OK = 0,
  AUTOIAD_STATUS_NULL_ARGUMENT = 1,
  AUTOIAD_STATUS_INVALID_UTF8 = 2,
  AUTOIAD_STATUS_TASK_CARD = 3,
  AUTOIAD_STATUS_METRIC = 4,
  AUTOIAD_STATUS_NOT_FOUND = 5,
  AUTOIAD_STATUS_RUN = 6,
  AUTOIAD_STATUS_PANIC = 7,
} AutoiadStatus;

/**
 * Outcome of one pipeline run.
 */
typedef struct AutoiadReport AutoiadReport;

/**
 * Parsed task card.
 */
typedef struct AutoiadTaskCard AutoiadTaskCard;

/**
 * Suite aggregate. `mean_auroc` is NaN when no task has a numeric AUROC.
 */
typedef struct AutoiadSummary {
  uint32_t n_tasks;
  uint64_t stages_completed;
  double success_rate;
  double mean_time_s;
  double mean_completion_tokens;
  double mean_prompt_tokens;
  double mean_auroc;
  uint32_t nan_auroc_tasks;
} AutoiadSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *autoiad_last_error(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void autoiad_string_free(char *s);

/**
 * Parse a task card from JSON.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is a valid pointer.
 */
enum AutoiadStatus autoiad_task_card_parse(const char *json, struct AutoiadTaskCard **out);

/**
 * # Safety
 * `card` is null or a live handle from [`autoiad_task_card_parse`].
 */
void autoiad_task_card_free(struct AutoiadTaskCard *card);

/**
 * Canonical JSON for the card.
 *
 * # Safety
 * `card` is a live handle; `out` is a valid pointer.
 */
enum AutoiadStatus autoiad_task_card_to_json(const struct AutoiadTaskCard *card, char **out);

/**
 * Validation report as JSON (`{"ok": bool, "issues": [...]}`).
 *
 * # Safety
 * `card` is a live handle; `out` is a valid pointer.
 */
enum AutoiadStatus autoiad_task_card_validate(const struct AutoiadTaskCard *card, char **out);

/**
 * Image-level AUROC of `n` scores against 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` point to `n` elements each; `out` is valid.
 */
enum AutoiadStatus autoiad_auroc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out);

/**
 * Aggregate of a bundled fixture (e.g. `gemini-2.5-flash`).
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is valid.
 */
enum AutoiadStatus autoiad_fixture_summary(const char *name, struct AutoiadSummary *out);

/**
 * Markdown table of a bundled fixture, with its summary row.
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is valid.
 */
enum AutoiadStatus autoiad_fixture_markdown(const char *name, char **out);

/**
 * Run the pipeline for `card` against a scripted transcript. Runs are
 * created under `out_dir`. `attempt_cap` 0 disables the per-stage
 * dispatch cap.
 *
 * # Safety
 * `card` is a live handle; strings are NUL-terminated; `out` is valid.
 */
enum AutoiadStatus autoiad_run_scripted(const struct AutoiadTaskCard *card,
                                        const char *transcript_path,
                                        const char *out_dir,
                                        uint64_t max_steps,
                                        double time_cap_s,
                                        uint32_t attempt_cap,
                                        struct AutoiadReport **out);

/**
 * # Safety
 * `report` is null or a live handle.
 */
void autoiad_report_free(struct AutoiadReport *report);

/**
 * Number of validated stages (0..=4).
 *
 * # Safety
 * `report` is a live handle.
 */
uint32_t autoiad_report_stages(const struct AutoiadReport *report);

/**
 * AUROC of the run; NaN when absent.
 *
 * # Safety
 * `report` is a live handle.
 */
double autoiad_report_auroc(const struct AutoiadReport *report);

/**
 * Full report as JSON.
 *
 * # Safety
 * `report` is a live handle; `out` is valid.
 */
enum AutoiadStatus autoiad_report_to_json(const struct AutoiadReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AUTOIAD_H */
