#ifndef CVTRANSFER_H
#define CVTRANSFER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvtGain {
  /**
   * Cancels the input-beamsplitter vacuum.
   */
  CVT_GAIN_CANCELLATION = 0,
  /**
   * Restores unit input amplitude after link loss.
   */
  CVT_GAIN_LOSS_COMPENSATED = 1,
  /**
   * Uses `CvtParams::gain`.
   */
  CVT_GAIN_MANUAL = 2,
} CvtGain;

typedef enum CvtStatus {
  CVT_STATUS_OK = 0,
  CVT_STATUS_NULL_POINTER = 1,
  CVT_STATUS_INVALID_ARGUMENT = 2,
  CVT_STATUS_DOMAIN_ERROR = 3,
  CVT_STATUS_UNPHYSICAL = 4,
  CVT_STATUS_INDEX_OUT_OF_RANGE = 5,
  CVT_STATUS_PANIC = 6,
} CvtStatus;

typedef enum CvtOutput {
  /**
   * The displaced beam arriving at the receiver.
   */
  CVT_OUTPUT_CHANNEL = 0,
  CVT_OUTPUT_OUT1 = 1,
  CVT_OUTPUT_OUT2 = 2,
  /**
   * One of the cloner outputs, selected by index.
   */
  CVT_OUTPUT_CLONE = 3,
} CvtOutput;

/**
 * Opaque built protocol.
 */
typedef struct CvtProtocol CvtProtocol;

typedef struct CvtParams {
  double reflectivity;
  double squeezing;
  double eta;
  enum CvtGain gain_policy;
  double gain;
  /**
   * 0 for the two-output transfer, otherwise the number of cloner copies.
   */
  uint32_t clones;
  double mean_x;
  double mean_y;
} CvtParams;

typedef struct CvtSnr {
  double snr_x;
  double snr_y;
  /**
   * The closed printed expression, for comparison.
   */
  double printed_x;
  double printed_y;
} CvtSnr;

typedef struct CvtMcEstimate {
  double mean_x;
  double mean_y;
  double var_x;
  double var_y;
  double stderr_mean_x;
  double stderr_mean_y;
  double stderr_var_x;
  double stderr_var_y;
  double fidelity;
  double stderr_fidelity;
  uint64_t shots;
} CvtMcEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cvt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cvt_version(void);

/**
 * Transfer at `R = 0`, `r = 0`, lossless, cancellation gain, vacuum input.
 */
struct CvtParams cvt_params_default(void);

/**
 * # Safety
 * `params` must point to a valid `CvtParams`; `out` must be writable.
 */
enum CvtStatus cvt_protocol_build(const struct CvtParams *params, struct CvtProtocol **out);

/**
 * # Safety
 * `protocol` must be null or a handle from `cvt_protocol_build` not yet freed.
 */
void cvt_protocol_free(struct CvtProtocol *protocol);

/**
 * # Safety
 * `protocol` must be a live handle; `out` must be writable.
 */
enum CvtStatus cvt_protocol_gain(const struct CvtProtocol *protocol, double *out);

/**
 * Number of cloner outputs (0 for the two-output transfer).
 *
 * # Safety
 * `protocol` must be a live handle; `out` must be writable.
 */
enum CvtStatus cvt_protocol_clone_count(const struct CvtProtocol *protocol, uint32_t *out);

/**
 * Fidelity of an output with the coherent input.
 *
 * # Safety
 * `protocol` must be a live handle; `out` must be writable.
 */
enum CvtStatus cvt_protocol_fidelity(const struct CvtProtocol *protocol,
                                     enum CvtOutput which,
                                     uint32_t index,
                                     double *out);

/**
 * # Safety
 * `protocol` must be a live handle; `vx` and `vy` must be writable.
 */
enum CvtStatus cvt_protocol_variance(const struct CvtProtocol *protocol,
                                     enum CvtOutput which,
                                     uint32_t index,
                                     double *vx,
                                     double *vy);

/**
 * # Safety
 * `protocol` must be a live handle; `mx` and `my` must be writable.
 */
enum CvtStatus cvt_protocol_mean(const struct CvtProtocol *protocol,
                                 enum CvtOutput which,
                                 uint32_t index,
                                 double *mx,
                                 double *my);

/**
 * `1/(R+1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CvtStatus cvt_fidelity_bound_transfer(double reflectivity, double *out);

/**
 * `M/(2M-1)`; returns NaN for `m < 1`.
 */
double cvt_clone_bound(uint32_t m);

/**
 * Closed-form fidelities of the first and of every other cloner output.
 *
 * # Safety
 * `out1` and `copy` must be writable.
 */
enum CvtStatus cvt_clone_closed_forms(uint32_t m, double squeezing, double *out1, double *copy);

/**
 * First-principles SNR of a dual-homodyne measurement of the channel.
 *
 * # Safety
 * `params` must point to a valid `CvtParams`; `out` must be writable.
 */
enum CvtStatus cvt_channel_snr(const struct CvtParams *params,
                               double vin_x,
                               double vin_y,
                               struct CvtSnr *out);

/**
 * Monte-Carlo SNR estimate with its standard errors.
 *
 * # Safety
 * `params` must point to a valid `CvtParams`; every output pointer must be writable.
 */
enum CvtStatus cvt_mc_snr(const struct CvtParams *params,
                          uint64_t shots,
                          uint64_t seed,
                          double vin_x,
                          double vin_y,
                          double *snr_x,
                          double *snr_y,
                          double *stderr_x,
                          double *stderr_y);

/**
 * Shot-level simulation; writes the estimate for one output.
 *
 * # Safety
 * `params` must point to a valid `CvtParams`; `out` must be writable.
 */
enum CvtStatus cvt_mc_run(const struct CvtParams *params,
                          uint64_t shots,
                          uint64_t seed,
                          enum CvtOutput which,
                          uint32_t index,
                          struct CvtMcEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVTRANSFER_H */
