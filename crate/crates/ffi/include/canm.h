/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CANM_H
#define CANM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum CanmStatus {
  CANM_STATUS_OK = 0,
  CANM_STATUS_NULL_POINTER = 1,
  CANM_STATUS_INVALID_ARGUMENT = 2,
  CANM_STATUS_SHAPE = 3,
  CANM_STATUS_CONFIG = 4,
  CANM_STATUS_IO = 5,
  CANM_STATUS_FORMAT = 6,
  /**
   * Non-finite values, division by zero or diverged training.
   */
  CANM_STATUS_NUMERIC = 7,
  /**
   * A verification run finished and at least one check failed.
   */
  CANM_STATUS_CHECK_FAILED = 8,
  CANM_STATUS_PANIC = 9,
} CanmStatus;

/**
 * Opaque network handle.
 */
typedef struct CanmNetwork CanmNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *canm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *canm_version(void);

/**
 * Builds a fresh network from a preset name (`default`, `desk`, `micro`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CanmStatus canm_network_from_preset(const char *preset,
                                         uint64_t seed,
                                         struct CanmNetwork **out);

/**
 * Builds a fresh network from a JSON configuration.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CanmStatus canm_network_from_json(const char *json, uint64_t seed, struct CanmNetwork **out);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated path and `out` a writable pointer.
 */
enum CanmStatus canm_network_open(const char *dir, struct CanmNetwork **out);

/**
 * Writes the weights and manifest to `dir`.
 *
 * # Safety
 * `net` must come from this library and `dir` be a NUL-terminated path.
 */
enum CanmStatus canm_network_save(const struct CanmNetwork *net, const char *dir);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `net` must come from this library and not be used afterwards.
 */
void canm_network_free(struct CanmNetwork *net);

/**
 * Input resolution expected by `net`.
 *
 * # Safety
 * `net` must come from this library; `h` and `w` must be writable.
 */
enum CanmStatus canm_network_input_size(const struct CanmNetwork *net, size_t *h, size_t *w);

/**
 * Number of learnable scalars.
 *
 * # Safety
 * `net` must come from this library; `count` must be writable.
 */
enum CanmStatus canm_network_param_count(const struct CanmNetwork *net, uint64_t *count);

/**
 * Super-resolves one image. All buffers hold `h * w` values; the output
 * is not clamped.
 *
 * # Safety
 * `net` must come from this library and the buffers must hold `h * w`
 * doubles; `out` must not alias the inputs.
 */
enum CanmStatus canm_network_forward(const struct CanmNetwork *net,
                                     const double *reference,
                                     const double *lr_interp,
                                     size_t h,
                                     size_t w,
                                     double *out);

/**
 * Simulates low-resolution acquisition of `img` by central k-space
 * cropping. `lr_small` receives `(h / scale) * (w / scale)` values and
 * may be null; `lr_interp` receives `h * w` values.
 *
 * # Safety
 * `img` and `lr_interp` must hold `h * w` doubles and `lr_small`, when
 * non-null, `(h / scale) * (w / scale)`.
 */
enum CanmStatus canm_degrade(const double *img,
                             size_t h,
                             size_t w,
                             size_t scale,
                             double *lr_small,
                             double *lr_interp);

/**
 * PSNR in dB for the given data range; identical images give +inf.
 *
 * # Safety
 * `a` and `b` must hold `h * w` doubles; `db` must be writable.
 */
enum CanmStatus canm_psnr(const double *a,
                          const double *b,
                          size_t h,
                          size_t w,
                          double data_range,
                          double *db);

/**
 * Mean SSIM with an 11x11 Gaussian window.
 *
 * # Safety
 * `a` and `b` must hold `h * w` doubles; `value` must be writable.
 */
enum CanmStatus canm_ssim(const double *a,
                          const double *b,
                          size_t h,
                          size_t w,
                          double data_range,
                          double *value);

/**
 * Runs a verification suite (`grad`, `oracle` or `all`). `report_json`
 * may be null; otherwise it receives a string to release with
 * [`canm_string_free`]. Returns `CANM_STATUS_CHECK_FAILED` when any check
 * fails, still filling the report.
 *
 * # Safety
 * `suite` must be a NUL-terminated string; `report_json`, when non-null,
 * must be writable.
 */
enum CanmStatus canm_verify(const char *suite, char **report_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void canm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CANM_H */
