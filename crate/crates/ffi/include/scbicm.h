#ifndef SCBICM_H
#define SCBICM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ScbicmStatus {
  SCBICM_STATUS_OK = 0,
  SCBICM_STATUS_NULL_POINTER = 1,
  SCBICM_STATUS_INVALID_ARGUMENT = 2,
  SCBICM_STATUS_INSUFFICIENT_SAMPLES = 3,
  SCBICM_STATUS_NON_CONVERGENCE = 4,
  SCBICM_STATUS_IO = 5,
  SCBICM_STATUS_INTERNAL = 6,
} ScbicmStatus;

typedef enum ScbicmModulation {
  SCBICM_MODULATION_QPSK = 0,
  SCBICM_MODULATION_QAM16 = 1,
  SCBICM_MODULATION_QAM64 = 2,
} ScbicmModulation;

typedef enum ScbicmFading {
  SCBICM_FADING_AWGN = 0,
  SCBICM_FADING_RAYLEIGH = 1,
} ScbicmFading;

typedef enum ScbicmDemapper {
  SCBICM_DEMAPPER_MAP = 0,
  SCBICM_DEMAPPER_MAX_LOG_MAP = 1,
} ScbicmDemapper;

// Opaque channel template (constellation and fading; the noise level is
// chosen by each routine).
typedef struct ScbicmChannel ScbicmChannel;

// Opaque BP-GEXIT curve.
typedef struct ScbicmCurve ScbicmCurve;

// Numerical budget shared by the density-evolution entry points.
typedef struct ScbicmDeOptions {
  // A [`ScbicmDemapper`] code.
  uint32_t demapper;
  // Monte-Carlo samples per demapper density; 0 selects the default.
  uintptr_t demapper_samples;
  // Demapper refresh period; 0 means non-iterative detection.
  uintptr_t id_period;
  // Iteration cap; 0 selects the default.
  uintptr_t max_iters;
  uint64_t seed;
} ScbicmDeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Default options: MAP demapper, default budgets, seed 1.
struct ScbicmDeOptions scbicm_de_options_default(void);

// Library version as a static NUL-terminated string.
const char *scbicm_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *scbicm_last_error(void);

// Creates a channel template from [`ScbicmModulation`] and [`ScbicmFading`]
// codes.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ScbicmStatus scbicm_channel_new(uint32_t modulation,
                                     uint32_t fading,
                                     struct ScbicmChannel **out);

// # Safety
// `ch` must be NULL or a handle from [`scbicm_channel_new`] not yet freed.
void scbicm_channel_free(struct ScbicmChannel *ch);

// Bits per constellation symbol.
//
// # Safety
// `ch` must be a live channel handle; `out` must be writable.
enum ScbicmStatus scbicm_channel_bits(const struct ScbicmChannel *ch, uintptr_t *out);

// Noise standard deviation per real dimension for the given Eb/N0.
//
// # Safety
// `out` must be writable.
enum ScbicmStatus scbicm_ebn0_to_sigma(double ebn0_db,
                                       double rate,
                                       uintptr_t bits_per_symbol,
                                       double *out);

// Smallest Eb/N0 (dB) at which the BICM GMI (or the coded-modulation
// capacity when `coded_modulation` is set) reaches `rate`.
//
// # Safety
// `ch` must be a live channel handle; the output pointers must be writable.
enum ScbicmStatus scbicm_noise_threshold(const struct ScbicmChannel *ch,
                                         uint32_t demapper,
                                         double rate,
                                         bool coded_modulation,
                                         uintptr_t samples,
                                         uint64_t seed,
                                         double *out_ebn0_db,
                                         double *out_stderr_db);

// BP threshold (Eb/N0 in dB) of the uncoupled `(dl, dr)` regular ensemble.
//
// # Safety
// `ch` must be a live channel handle; `opts` and `out_ebn0_db` must be valid.
enum ScbicmStatus scbicm_bp_threshold(const struct ScbicmChannel *ch,
                                      uintptr_t dl,
                                      uintptr_t dr,
                                      const struct ScbicmDeOptions *opts,
                                      double *out_ebn0_db);

// BP threshold (Eb/N0 in dB, at the design rate) of the `(dl, dr, L, w)`
// coupled ensemble.
//
// # Safety
// `ch` must be a live channel handle; `opts` and `out_ebn0_db` must be valid.
enum ScbicmStatus scbicm_sc_bp_threshold(const struct ScbicmChannel *ch,
                                         uintptr_t dl,
                                         uintptr_t dr,
                                         uintptr_t l,
                                         uintptr_t w,
                                         const struct ScbicmDeOptions *opts,
                                         double *out_ebn0_db);

// BP-GEXIT curve on `n_alpha` equally spaced channel entropies. `l == 0`
// selects the uncoupled ensemble. `kernel_samples == 0` selects the default.
//
// # Safety
// `ch` must be a live channel handle; `opts` valid; `out` writable.
enum ScbicmStatus scbicm_gexit_curve(const struct ScbicmChannel *ch,
                                     uintptr_t dl,
                                     uintptr_t dr,
                                     uintptr_t l,
                                     uintptr_t w,
                                     uintptr_t n_alpha,
                                     uintptr_t kernel_samples,
                                     const struct ScbicmDeOptions *opts,
                                     struct ScbicmCurve **out);

// # Safety
// `c` must be NULL or a handle from [`scbicm_gexit_curve`] not yet freed.
void scbicm_curve_free(struct ScbicmCurve *c);

// Number of points of the curve.
//
// # Safety
// `c` must be a live curve handle; `out` writable.
enum ScbicmStatus scbicm_curve_len(const struct ScbicmCurve *c, uintptr_t *out);

// Point `i` of the curve; `alpha` is increasing in `i`.
//
// # Safety
// `c` must be a live curve handle; output pointers writable (`stderr_out`
// may be NULL).
enum ScbicmStatus scbicm_curve_point(const struct ScbicmCurve *c,
                                     uintptr_t i,
                                     double *alpha_out,
                                     double *g_out,
                                     double *stderr_out);

// Area threshold of the curve, as Eb/N0 in dB at the ensemble design rate.
//
// # Safety
// `c` must be a live curve handle; `out` writable.
enum ScbicmStatus scbicm_curve_area_threshold(const struct ScbicmCurve *c, double *out_ebn0_db);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCBICM_H */
