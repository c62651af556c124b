#ifndef AJD_H
#define AJD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AjdStatus {
  AJD_STATUS_OK = 0,
  AJD_STATUS_NULL_POINTER = 1,
  // Malformed input: dimensions, arguments, states or JSON.
  AJD_STATUS_INVALID_INPUT = 2,
  AJD_STATUS_NOT_ADMISSIBLE = 3,
  // Numerical failure (unstable matrix, transform domain, thinning).
  AJD_STATUS_NUMERIC = 4,
  // A precondition on the model class was not met.
  AJD_STATUS_GATE = 5,
  AJD_STATUS_BUFFER_TOO_SMALL = 6,
  AJD_STATUS_PANIC = 99,
} AjdStatus;

// Opaque model handle.
typedef struct AjdModel AjdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ajd_version(void);

// Message of the last failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *ajd_last_error(void);

// Parses a JSON spec document into a new handle written to `*out`.
// The spec only has to be well formed; admissibility is checked by the
// calls that need it.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum AjdStatus ajd_model_from_json(const char *json, struct AjdModel **out);

// Releases a handle; null is ignored.
//
// # Safety
// `model` must be null or a handle not freed before.
void ajd_model_free(struct AjdModel *model);

// State dimension `d` and number of volatility factors `m`.
//
// # Safety
// `model` must be a live handle; `d` and `m` valid pointers.
enum AjdStatus ajd_model_dim(const struct AjdModel *model, size_t *d, size_t *m);

// JSON with the validation report and, for admissible specs, the stability
// report. Free the string with [`ajd_string_free`].
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum AjdStatus ajd_model_check_json(const struct AjdModel *model, char **out);

// Frees a string returned by this library; null is ignored.
//
// # Safety
// `s` must be null or a string from this library not freed before.
void ajd_string_free(char *s);

// `E[exp(uᵀX(t)) | X(0) = x]` for complex `u = u_re + i·u_im`.
//
// # Safety
// `x`, `u_re`, `u_im` must hold `d` values; `out_re`, `out_im` valid pointers.
enum AjdStatus ajd_char_fn(const struct AjdModel *model,
                           const double *x,
                           const double *u_re,
                           const double *u_im,
                           size_t d,
                           double t,
                           double *out_re,
                           double *out_im);

// Closed-form stationary mean, written to `out[0..d]`.
//
// # Safety
// `out` must be valid for `len` writes.
enum AjdStatus ajd_stationary_mean(const struct AjdModel *model, double *out, size_t len);

// Closed-form long-run covariance of the identity time average, row-major
// into `out[0..d*d]`.
//
// # Safety
// `out` must be valid for `len` writes.
enum AjdStatus ajd_stationary_cov(const struct AjdModel *model, double *out, size_t len);

// Simulates `X(0), X(Δ), …, X(nΔ)` into `out` (row-major, `(n+1)·d`
// values). Results depend only on the arguments, not on threading.
//
// # Safety
// `x0` must hold `d` values and `out` be valid for `len` writes.
enum AjdStatus ajd_simulate_skeleton(const struct AjdModel *model,
                                     const double *x0,
                                     size_t d,
                                     double delta,
                                     size_t n,
                                     double dt,
                                     uint64_t seed,
                                     double *out,
                                     size_t len);

// Transience rate `h(ε)` of a 1-D model with one volatility factor.
//
// # Safety
// `out` must be a valid pointer.
enum AjdStatus ajd_transience_rate(const struct AjdModel *model, double eps, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AJD_H */
