/* C ABI for the CSI feedback laboratory. Generated by cbindgen; do not edit. */

#ifndef CSI_LAB_H
#define CSI_LAB_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible entry point.
typedef enum CsiStatus {
  CSI_STATUS_OK = 0,
  // A required pointer argument was null.
  CSI_STATUS_NULL_ARGUMENT = 1,
  // Arguments failed validation.
  CSI_STATUS_INVALID_ARGUMENT = 2,
  // Filesystem failure.
  CSI_STATUS_IO = 3,
  // A serialized artifact failed to parse.
  CSI_STATUS_PARSE = 4,
  // A frame or index stream failed validation.
  CSI_STATUS_CORRUPT = 5,
  // Degenerate data (e.g. zero-energy sample).
  CSI_STATUS_DEGENERATE = 6,
  // Training diverged.
  CSI_STATUS_DIVERGED = 7,
  // The caller-provided buffer is too small.
  CSI_STATUS_BUFFER_TOO_SMALL = 8,
  // Unexpected internal failure.
  CSI_STATUS_INTERNAL = 9,
} CsiStatus;

// Opaque channel dataset handle.
typedef struct CsiDataset CsiDataset;

// Opaque quantizer handle (scalar spec or vector codebook).
typedef struct CsiQuantizer CsiQuantizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *csi_version(void);

// Message of the calling thread's most recent error, or null. The caller
// owns the returned string and must release it with [`csi_string_free`].
char *csi_last_error_message(void);

// Frees a string returned by this library. Null is a no-op.
//
// # Safety
// `s` must have been returned by a `csi_*` function and not freed before.
void csi_string_free(char *s);

// Synthesizes a dataset from a channel-config JSON document (an empty
// object selects the desk profile). `split` is 0 for train, 1 for test.
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out` a valid
// pointer.
enum CsiStatus csi_dataset_generate(const char *config_json,
                                    uint32_t split,
                                    struct CsiDataset **out);

// Reads a dataset file.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum CsiStatus csi_dataset_open(const char *path, struct CsiDataset **out);

// Writes a dataset file.
//
// # Safety
// `ds` must be a live handle; `path` a valid NUL-terminated string.
enum CsiStatus csi_dataset_save(const struct CsiDataset *ds, const char *path);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
uint32_t csi_dataset_len(const struct CsiDataset *ds);

// Sample tensor shape.
//
// # Safety
// All pointers must be valid.
enum CsiStatus csi_dataset_shape(const struct CsiDataset *ds,
                                 uint32_t *n_paths,
                                 uint32_t *n_tx,
                                 uint32_t *n_rx);

// Copies sample `index` into `out` as interleaved `(re, im)` float pairs;
// `out_len` must be exactly `2 * n_paths * n_tx * n_rx`.
//
// # Safety
// `ds` must be a live handle and `out` must point to `out_len` floats.
enum CsiStatus csi_dataset_sample(const struct CsiDataset *ds,
                                  uint32_t index,
                                  float *out,
                                  size_t out_len);

// Releases a dataset handle. Null is a no-op.
//
// # Safety
// `ds` must have come from this library and not be freed twice.
void csi_dataset_free(struct CsiDataset *ds);

// Normalized mean squared error between two interleaved complex buffers of
// `complex_len` coefficients each.
//
// # Safety
// Both buffers must hold `2 * complex_len` floats.
enum CsiStatus csi_nmse(const float *recovered,
                        const float *original,
                        size_t complex_len,
                        double *out);

// Mid-rise uniform quantization of `x` in [0, 1].
uint32_t csi_hard_quant(double x, uint8_t bits);

// Reconstruction level `(index + 0.5) / 2^bits`.
double csi_hard_dequant(uint32_t index, uint8_t bits);

// Differentiable staircase value and derivative at `x`.
//
// # Safety
// `value` and `derivative` must be valid pointers.
enum CsiStatus csi_soft_quant(double x,
                              uint8_t bits,
                              double beta,
                              double *value,
                              double *derivative);

// Telephony companding on [-1, 1]. `law`: 0 mu-law, 1 A-law. `direction`:
// 0 compress, 1 expand.
//
// # Safety
// `out` must be a valid pointer.
enum CsiStatus csi_compand(double x, uint32_t law, uint32_t direction, double *out);

// Uncompressed sample size in bits (32-bit float pairs).
uint64_t csi_raw_sample_bits(uint32_t n_paths, uint32_t n_tx, uint32_t n_rx);

// Uniform mid-rise scalar quantizer on [0, 1].
//
// # Safety
// `out` must be a valid pointer.
enum CsiStatus csi_quantizer_uniform(uint8_t bits, struct CsiQuantizer **out);

// Fits a data-adaptive scalar quantizer to `samples`.
//
// # Safety
// `samples` must point to `len` doubles; `out` must be valid.
enum CsiStatus csi_quantizer_fit_adaptive(const double *samples,
                                          size_t len,
                                          uint8_t bits,
                                          struct CsiQuantizer **out);

// Loads a quantizer artifact file.
//
// # Safety
// `path` must be a valid NUL-terminated string; `out` must be valid.
enum CsiStatus csi_quantizer_open(const char *path, struct CsiQuantizer **out);

// Saves a quantizer artifact file.
//
// # Safety
// `q` must be a live handle; `path` a valid NUL-terminated string.
enum CsiStatus csi_quantizer_save(const struct CsiQuantizer *q, const char *path);

// Quantizes `features` (doubles in the quantizer's domain). Writes up to
// `cap` indices and the true count to `written`; fails with
// `CSI_STATUS_BUFFER_TOO_SMALL` when `cap` is insufficient.
//
// # Safety
// Buffers must match their stated lengths.
enum CsiStatus csi_quantizer_quantize(const struct CsiQuantizer *q,
                                      const double *features,
                                      size_t len,
                                      uint32_t *out_indices,
                                      size_t cap,
                                      size_t *written);

// Reconstructs `feature_len` features from `indices`.
//
// # Safety
// Buffers must match their stated lengths.
enum CsiStatus csi_quantizer_dequantize(const struct CsiQuantizer *q,
                                        const uint32_t *indices,
                                        size_t n_indices,
                                        double *out,
                                        size_t feature_len);

// Releases a quantizer handle. Null is a no-op.
//
// # Safety
// `q` must have come from this library and not be freed twice.
void csi_quantizer_free(struct CsiQuantizer *q);

// Builds a feedback frame. `scheme` is the wire scheme id (0 uniform,
// 1 companded, 2 adaptive, 3 vector, 4 path-level); `mask` holds one 0/1
// byte per path. Writes up to `cap` bytes and the true length to `written`.
//
// # Safety
// Buffers must match their stated lengths.
enum CsiStatus csi_frame_encode(uint8_t scheme,
                                const uint8_t *mask,
                                size_t n_paths,
                                const uint32_t *indices,
                                const uint8_t *widths,
                                size_t n_symbols,
                                uint8_t *out,
                                size_t cap,
                                size_t *written);

// Validates a frame and reports its budget charge (mask + payload bits).
//
// # Safety
// `bytes` must point to `len` bytes; `out` must be valid.
enum CsiStatus csi_frame_feedback_bits(const uint8_t *bytes,
                                       size_t len,
                                       size_t n_paths,
                                       uint32_t *out);

// Runs a full pipeline described by a JSON config and returns the report
// row as JSON (free with [`csi_string_free`]). Heavy: may train networks.
//
// # Safety
// `config_json` must be a valid NUL-terminated string; `report_json_out`
// must be valid.
enum CsiStatus csi_pipeline_run(const char *config_json, char **report_json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSI_LAB_H */
