#ifndef HOMFLUCT_H
#define HOMFLUCT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HfStatus {
  HF_OK = 0,
  HF_INVALID_PARAMETER = 1,
  HF_DIMENSION = 2,
  HF_QUADRATURE = 3,
  HF_CONFIG = 4,
  HF_INVALID_RUN = 5,
  HF_IO = 6,
  HF_NULL_POINTER = 7,
  HF_PANIC = 8,
} HfStatus;

/**
 * One realization of the random potential.
 */
typedef struct HfField HfField;

/**
 * Initial condition `f`.
 */
typedef struct HfInitial HfInitial;

/**
 * Covariance spectrum of a stationary potential.
 */
typedef struct HfSpectrum HfSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty when none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *hf_last_error_message(void);

/**
 * Gaussian-bump spectrum `A·exp(-|ξ|²/(2ρ²))` in `dim` dimensions.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum HfStatus hf_spectrum_gaussian(size_t dim,
                                   double amplitude,
                                   double width,
                                   struct HfSpectrum **out);

/**
 * Spectrum induced by shot noise with a bump shape of radius `radius`
 * scaled by `scale`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum HfStatus hf_spectrum_poisson(size_t dim, double radius, double scale, struct HfSpectrum **out);

/**
 * # Safety
 * `spec` must come from an `hf_spectrum_*` constructor or be null.
 */
void hf_spectrum_free(struct HfSpectrum *spec);

/**
 * Effective potential strength `σ²`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HfStatus hf_sigma2(const struct HfSpectrum *spec, double *out);

/**
 * Covariance `R(x)`; `x` holds the spectrum dimension's coordinates.
 *
 * # Safety
 * `x` must point to `dim` doubles, `dim` equal to the spectrum dimension.
 */
enum HfStatus hf_covariance(const struct HfSpectrum *spec,
                            const double *x,
                            size_t dim,
                            double *out);

/**
 * `⟨Φ_λ, Φ_λ⟩`, the corrector variance.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HfStatus hf_corrector_variance(const struct HfSpectrum *spec, double lambda, double *out);

/**
 * `σ_λ² = E|∇Φ_λ|²`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HfStatus hf_sigma_lambda2(const struct HfSpectrum *spec, double lambda, double *out);

/**
 * Gaussian field with `modes` spectral modes drawn from `seed`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum HfStatus hf_field_gaussian(const struct HfSpectrum *spec,
                                size_t modes,
                                uint64_t seed,
                                struct HfField **out);

/**
 * Unit-intensity shot-noise field with a bump shape.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum HfStatus hf_field_poisson(size_t dim,
                               double radius,
                               double scale,
                               uint64_t seed,
                               struct HfField **out);

/**
 * `V(x)` for one realization.
 *
 * # Safety
 * `x` must point to `dim` doubles.
 */
enum HfStatus hf_field_eval(const struct HfField *field, const double *x, size_t dim, double *out);

/**
 * # Safety
 * `field` must come from an `hf_field_*` constructor or be null.
 */
void hf_field_free(struct HfField *field);

/**
 * `f ≡ value`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum HfStatus hf_initial_constant(double value, struct HfInitial **out);

/**
 * `f(x) = height·exp(-|x−center|²/(2·width²))`.
 *
 * # Safety
 * `center` must point to `dim` doubles.
 */
enum HfStatus hf_initial_bump(const double *center,
                              size_t dim,
                              double width,
                              double height,
                              struct HfInitial **out);

/**
 * # Safety
 * `initial` must come from an `hf_initial_*` constructor or be null.
 */
void hf_initial_free(struct HfInitial *initial);

/**
 * Homogenized solution `u_hom(t, x)`.
 *
 * # Safety
 * `x` must point to `dim` doubles.
 */
enum HfStatus hf_u_hom(const struct HfSpectrum *spec,
                       const struct HfInitial *initial,
                       double t,
                       const double *x,
                       size_t dim,
                       double *out);

/**
 * Green's function of `λ − ½Δ` at `x ≠ 0`.
 *
 * # Safety
 * `x` must point to `dim` doubles.
 */
enum HfStatus hf_green_lambda(const double *x, size_t dim, double lambda, double *out);

/**
 * Variance of `v_ε(t, x)` at finite `ε` (d = 3).
 *
 * # Safety
 * `x` must point to `dim` doubles.
 */
enum HfStatus hf_var_eps(const struct HfSpectrum *spec,
                         const struct HfInitial *initial,
                         double t,
                         const double *x,
                         size_t dim,
                         double eps,
                         double *out);

/**
 * Variance of the limit `v(t, x)` (d = 3).
 *
 * # Safety
 * `x` must point to `dim` doubles.
 */
enum HfStatus hf_var_limit(const struct HfSpectrum *spec,
                           const struct HfInitial *initial,
                           double t,
                           const double *x,
                           size_t dim,
                           double *out);

/**
 * Feynman-Kac estimate of `u_ε(t, x)` for one realization: writes the
 * real and imaginary parts and the 95% half-width.
 *
 * # Safety
 * `x` must point to `dim` doubles; out-pointers must be valid.
 */
enum HfStatus hf_u_eps_estimate(const struct HfField *field,
                                const struct HfInitial *initial,
                                double t,
                                const double *x,
                                size_t dim,
                                double eps,
                                size_t n_paths,
                                double dt,
                                uint64_t seed,
                                double *out_re,
                                double *out_im,
                                double *out_ci);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMFLUCT_H */
