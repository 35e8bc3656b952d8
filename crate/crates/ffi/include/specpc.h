#ifndef SPECPC_H
#define SPECPC_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum {
  SPECPC_SOURCE_SPECTRAL = 0,
  SPECPC_SOURCE_CONTEMPORANEOUS = 1,
} SpecpcSource;

typedef enum {
  SPECPC_STATUS_OK = 0,
  SPECPC_STATUS_NULL_POINTER = 1,
  SPECPC_STATUS_INVALID_PARAMETER = 2,
  SPECPC_STATUS_INVALID_DATA = 3,
  SPECPC_STATUS_NUMERICAL = 4,
  SPECPC_STATUS_BUFFER_TOO_SMALL = 5,
  SPECPC_STATUS_PANIC = 6,
} SpecpcStatus;

typedef struct SpecpcReport SpecpcReport;

typedef struct SpecpcSeries SpecpcSeries;

/**
 * Detection settings. `band_low_hz`/`band_high_hz` restrict the CUSUM to a
 * band when both are finite; `threshold` replaces the default when finite.
 */
typedef struct {
  size_t component;
  SpecpcSource source;
  size_t block_length;
  size_t span;
  size_t radius;
  size_t components;
  double band_low_hz;
  double band_high_hz;
  double threshold;
  bool per_block_filters;
} SpecpcDetectConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Free with
 * [`specpc_string_free`].
 */
char *specpc_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void specpc_string_free(char *s);

/**
 * The default detection threshold for a series of `length` samples.
 */
double specpc_threshold(size_t length);

SpecpcDetectConfig specpc_detect_config_default(void);

/**
 * Copies a row-major `rows × channels` array into a new series.
 *
 * # Safety
 * `data` must point to `rows * channels` readable doubles and `out` must be
 * writable.
 */
SpecpcStatus specpc_series_new(const double *data,
                               size_t rows,
                               size_t channels,
                               double sampling_rate,
                               SpecpcSeries **out);

/**
 * # Safety
 * `series` must be null or a handle from [`specpc_series_new`], freed once.
 */
void specpc_series_free(SpecpcSeries *series);

/**
 * Runs detection. `config` may be null for the defaults.
 *
 * # Safety
 * `series` must be a live handle, `config` null or readable, `out` writable.
 */
SpecpcStatus specpc_detect(const SpecpcSeries *series,
                           const SpecpcDetectConfig *config,
                           SpecpcReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`specpc_detect`], freed once.
 */
void specpc_report_free(SpecpcReport *report);

/**
 * Number of detected change points; 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t specpc_report_num_changes(const SpecpcReport *report);

/**
 * Threshold applied by the report; NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double specpc_report_threshold(const SpecpcReport *report);

/**
 * Copies the change times (sample indices, ascending) into `buf`. `len`,
 * when non-null, receives the count even if `cap` is too small.
 *
 * # Safety
 * `buf` must hold `cap` writable elements; `len` null or writable.
 */
SpecpcStatus specpc_report_change_times(const SpecpcReport *report,
                                        size_t *buf,
                                        size_t cap,
                                        size_t *len);

/**
 * Copies the segmented component series (one value per sample).
 *
 * # Safety
 * As for [`specpc_report_change_times`].
 */
SpecpcStatus specpc_report_component(const SpecpcReport *report,
                                     double *buf,
                                     size_t cap,
                                     size_t *len);

/**
 * The full report as JSON. Free with [`specpc_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
SpecpcStatus specpc_report_json(const SpecpcReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECPC_H */
