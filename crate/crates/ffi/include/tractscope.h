#ifndef TRACTSCOPE_H
#define TRACTSCOPE_H

/* Generated by cbindgen from the tractscope-ffi sources; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_INVALID_CONFIG = 3,
  TS_STATUS_DATA_ERROR = 4,
  TS_STATUS_IO_ERROR = 5,
  TS_STATUS_PANIC = 99,
} TsStatus;

/**
 * Feature matrices of a dataset.
 */
typedef struct TsDataset TsDataset;

typedef struct TsReport TsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage.
 */
const char *ts_version(void);

/**
 * Message of the last failed call on this thread, or null.
 */
const char *ts_last_error(void);

/**
 * Two-sided Mann-Whitney U of `a` against `b`.
 */
enum TsStatus ts_mann_whitney_u(const double *a,
                                size_t na,
                                const double *b,
                                size_t nb,
                                double *u_out,
                                double *p_out);

/**
 * ROC AUC of `scores`; `labels[i]` nonzero marks a positive.
 */
enum TsStatus ts_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *auc_out);

/**
 * Open a dataset directory and load its feature matrices.
 */
enum TsStatus ts_dataset_open(const char *path, struct TsDataset **out);

/**
 * Load feature matrices from an exported CSV directory.
 */
enum TsStatus ts_dataset_from_csv(const char *dir, struct TsDataset **out);

/**
 * Number of regions; 0 for null.
 */
size_t ts_dataset_region_count(const struct TsDataset *ds);

void ts_dataset_free(struct TsDataset *ds);

/**
 * Run the pipeline. `config_json` and `cohort_json` may be null: the
 * defaults are the standard config and a balanced cohort over all ages.
 */
enum TsStatus ts_run(const struct TsDataset *ds,
                     const char *config_json,
                     const char *cohort_json,
                     bool parallel,
                     struct TsReport **out);

/**
 * Report as JSON; release with `ts_string_free`.
 */
enum TsStatus ts_report_json(const struct TsReport *report, char **out);

/**
 * Number of evaluated regions; 0 for null.
 */
size_t ts_report_region_count(const struct TsReport *report);

/**
 * Region at `index` in saliency order.
 */
enum TsStatus ts_report_region(const struct TsReport *report,
                               size_t index,
                               uint32_t *region_out,
                               double *accuracy_mean_out,
                               double *accuracy_std_out,
                               double *auc_mean_out);

void ts_report_free(struct TsReport *report);

void ts_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRACTSCOPE_H */
