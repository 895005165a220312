#ifndef SME_CORRELATE_H
#define SME_CORRELATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SmecStatus {
  SMEC_STATUS_OK = 0,
  SMEC_STATUS_NULL_POINTER = 1,
  SMEC_STATUS_INVALID_ARGUMENT = 2,
  SMEC_STATUS_LINALG = 3,
  SMEC_STATUS_MODEL = 4,
  SMEC_STATUS_SUPEROPS = 5,
  SMEC_STATUS_TRAJECTORY = 6,
  SMEC_STATUS_ANALYTIC = 7,
  SMEC_STATUS_ESTIMATOR = 8,
  SMEC_STATUS_IO = 9,
  SMEC_STATUS_PANIC = 10,
} SmecStatus;

/**
 * A model together with its initial state.
 */
typedef struct SmecModel SmecModel;

/**
 * The measurement record of one simulated trajectory.
 */
typedef struct SmecRecord SmecRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *smec_last_error_message(void);

/**
 * Static name of a `SmecStatus` value, or `"unknown"`.
 */
const char *smec_status_name(int32_t status);

/**
 * Parse a JSON model file.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum SmecStatus smec_model_from_json(const char *json, struct SmecModel **out);

/**
 * Built-in model by name.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum SmecStatus smec_model_from_zoo(const char *name, struct SmecModel **out);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void smec_model_free(struct SmecModel *model);

/**
 * Hilbert-space dimension and number of detectors.
 *
 * # Safety
 * `model` must be a live handle; outputs must be writable.
 */
enum SmecStatus smec_model_shape(const struct SmecModel *model, size_t *dim, size_t *n_detectors);

/**
 * Sharp correlation `C_{t_1..t_n}` of detectors `detectors[i]` at
 * `times[i]`.
 *
 * # Safety
 * `detectors` and `times` must hold `n` entries; `value` must be writable.
 */
enum SmecStatus smec_sharp_correlation(const struct SmecModel *model,
                                       const char *const *detectors,
                                       const double *times,
                                       size_t n,
                                       double *value);

/**
 * Filtered correlation of rectangular windows `[starts[i], ends[i])` on
 * `detectors[i]`, evolved up to `horizon`.
 *
 * # Safety
 * `detectors`, `starts` and `ends` must hold `n` entries; `value` must be
 * writable.
 */
enum SmecStatus smec_filtered_correlation(const struct SmecModel *model,
                                          const char *const *detectors,
                                          const double *starts,
                                          const double *ends,
                                          size_t n,
                                          double horizon,
                                          double *value);

/**
 * Simulate one trajectory of `n_steps` steps of size `dt` on stream
 * `stream` of `seed`. `scheme` is a `SmecScheme` value.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum SmecStatus smec_simulate(const struct SmecModel *model,
                              double dt,
                              size_t n_steps,
                              uint64_t seed,
                              uint64_t stream,
                              uint32_t scheme,
                              struct SmecRecord **out);

/**
 * Release a record. Null is ignored.
 *
 * # Safety
 * `record` must come from this library and not be used afterwards.
 */
void smec_record_free(struct SmecRecord *record);

/**
 * Number of steps and detectors of a record.
 *
 * # Safety
 * `record` must be a live handle; outputs must be writable.
 */
enum SmecStatus smec_record_shape(const struct SmecRecord *record,
                                  size_t *n_steps,
                                  size_t *n_detectors);

/**
 * Borrow the increments of one detector. The array stays valid while the
 * record lives.
 *
 * # Safety
 * `record` must be a live handle; outputs must be writable.
 */
enum SmecStatus smec_record_increments(const struct SmecRecord *record,
                                       size_t detector,
                                       const double **data,
                                       size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SME_CORRELATE_H */
