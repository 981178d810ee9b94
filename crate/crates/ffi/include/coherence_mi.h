#ifndef COHERENCE_MI_H
#define COHERENCE_MI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Some symbols never occur in the stream.
#define CMI_WARN_UNSEEN_SYMBOLS 1

// Fewer samples than feature dimensions.
#define CMI_WARN_FEW_SAMPLES 2

// The autocorrelation matrices are badly conditioned.
#define CMI_WARN_ILL_CONDITIONED 4

// Approximate eigenvalues were clipped (fast estimator).
#define CMI_WARN_CLIPPED_BINS 8

// Result code of every fallible call.
typedef enum CmiStatus {
  CMI_STATUS_OK = 0,
  CMI_STATUS_NULL_POINTER = 1,
  CMI_STATUS_INVALID_PARAMETER = 2,
  CMI_STATUS_LENGTH_MISMATCH = 3,
  CMI_STATUS_NON_FINITE = 4,
  CMI_STATUS_TOO_FEW_SAMPLES = 5,
  CMI_STATUS_SYMBOL_OUT_OF_RANGE = 6,
  CMI_STATUS_INVALID_MASS = 7,
  CMI_STATUS_INTERNAL = 99,
} CmiStatus;

// Feature-map parameters of the analog estimators.
typedef struct CmiFeatureConfig CmiFeatureConfig;

// Paired real-valued samples.
typedef struct CmiRealSamples CmiRealSamples;

// Paired symbol streams.
typedef struct CmiSymbolSamples CmiSymbolSamples;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *cmi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *cmi_version(void);

// Copies `len` pairs into a new sample handle.
//
// # Safety
// `x` and `y` must point to `len` readable doubles; `out` must be writable.
enum CmiStatus cmi_real_samples_new(const double *x,
                                    const double *y,
                                    size_t len,
                                    struct CmiRealSamples **out);

// # Safety
// `s` must be null or a handle from [`cmi_real_samples_new`] not yet freed.
void cmi_real_samples_free(struct CmiRealSamples *s);

// Copies `len` symbol pairs with alphabets `0..x_alphabet` and `0..y_alphabet`.
//
// # Safety
// `x` and `y` must point to `len` readable values; `out` must be writable.
enum CmiStatus cmi_symbol_samples_new(const uint32_t *x,
                                      const uint32_t *y,
                                      size_t len,
                                      size_t x_alphabet,
                                      size_t y_alphabet,
                                      struct CmiSymbolSamples **out);

// # Safety
// `s` must be null or a handle from [`cmi_symbol_samples_new`] not yet freed.
void cmi_symbol_samples_free(struct CmiSymbolSamples *s);

// Configuration with the default alpha and the dimension rule for `sigma2`.
//
// # Safety
// `out` must be writable.
enum CmiStatus cmi_config_from_sigma2(double sigma2, struct CmiFeatureConfig **out);

// Configuration with every parameter explicit; `dim` must be odd and >= 3.
//
// # Safety
// `out` must be writable.
enum CmiStatus cmi_config_new(double sigma2,
                              double alpha,
                              size_t dim,
                              struct CmiFeatureConfig **out);

// Configuration with `sigma2 = p * samples^(-2/5)`.
//
// # Safety
// `out` must be writable.
enum CmiStatus cmi_config_silverman(double p, size_t samples, struct CmiFeatureConfig **out);

// Turns standardization of the inputs on or off (on by default).
//
// # Safety
// `cfg` must be a live configuration handle.
enum CmiStatus cmi_config_set_standardize(struct CmiFeatureConfig *cfg, bool standardize);

// Feature dimension N, or 0 for a null handle.
//
// # Safety
// `cfg` must be null or a live configuration handle.
size_t cmi_config_dim(const struct CmiFeatureConfig *cfg);

// Smoothing variance, or NaN for a null handle.
//
// # Safety
// `cfg` must be null or a live configuration handle.
double cmi_config_sigma2(const struct CmiFeatureConfig *cfg);

// # Safety
// `cfg` must be null or a configuration handle not yet freed.
void cmi_config_free(struct CmiFeatureConfig *cfg);

// Analog SMI with exact whitening. `warnings` may be null.
//
// # Safety
// Handles must be live; `value` must be writable.
enum CmiStatus cmi_smi_analog(const struct CmiRealSamples *s,
                              const struct CmiFeatureConfig *cfg,
                              double *value,
                              uint32_t *warnings);

// Fourier-diagonal approximation of the analog SMI. `warnings` may be null.
//
// # Safety
// Handles must be live; `value` must be writable.
enum CmiStatus cmi_smi_analog_fast(const struct CmiRealSamples *s,
                                   const struct CmiFeatureConfig *cfg,
                                   double *value,
                                   uint32_t *warnings);

// Analog SMI minus the estimate on `y` circularly shifted by `shift`
// (0 selects L/2). `fast` selects the Fourier-diagonal path.
//
// # Safety
// Handles must be live; `value` must be writable.
enum CmiStatus cmi_smi_bias_reduced(const struct CmiRealSamples *s,
                                    const struct CmiFeatureConfig *cfg,
                                    size_t shift,
                                    bool fast,
                                    double *value,
                                    uint32_t *warnings);

// Plug-in SMI of a symbol stream.
//
// # Safety
// `s` must be live; `value` must be writable.
enum CmiStatus cmi_smi_discrete(const struct CmiSymbolSamples *s,
                                double *value,
                                uint32_t *warnings);

// Plug-in HGR maximal correlation of a symbol stream.
//
// # Safety
// `s` must be live; `value` must be writable.
enum CmiStatus cmi_hgr_discrete(const struct CmiSymbolSamples *s,
                                double *value,
                                uint32_t *warnings);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COHERENCE_MI_H */
