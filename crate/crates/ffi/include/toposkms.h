/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TOPOSKMS_H
#define TOPOSKMS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum TkStatus {
  TK_STATUS_OK = 0,
  TK_STATUS_NULL_POINTER = 1,
  TK_STATUS_INVALID_UTF8 = 2,
  TK_STATUS_PARSE_ERROR = 3,
  TK_STATUS_INVALID_INPUT = 4,
  TK_STATUS_DIMENSION_MISMATCH = 5,
  TK_STATUS_NUMERICAL_ERROR = 6,
  // The scenario ran and at least one check failed; the report is still returned.
  TK_STATUS_CHECKS_FAILED = 7,
  TK_STATUS_PANIC = 8,
} TkStatus;

// A context: a partition of the identity into orthogonal projections.
typedef struct TkContext TkContext;

// A dense square complex matrix.
typedef struct TkMatrix TkMatrix;

// A validated density matrix.
typedef struct TkState TkState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next call.
const char *tk_last_error(void);

// Library version as a static string.
const char *tk_version(void);

// Builds an n×n matrix from row-major real and (optionally null) imaginary parts.
//
// # Safety
// `re` (and `im` when non-null) must point to n*n doubles; `out` must be writable.
enum TkStatus tk_matrix_new(size_t dim, const double *re, const double *im, struct TkMatrix **out);

// # Safety
// `m` must be null or a handle from this library, not yet freed.
void tk_matrix_free(struct TkMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t tk_matrix_dim(const struct TkMatrix *m);

// # Safety
// `m` must be a live matrix handle; `re` and `im` must be writable.
enum TkStatus tk_matrix_get(const struct TkMatrix *m, size_t i, size_t j, double *re, double *im);

// Validates a density matrix (Hermitian, unit trace, positive).
//
// # Safety
// `density` must be a live matrix handle; `out` must be writable.
enum TkStatus tk_state_new(const struct TkMatrix *density, struct TkState **out);

// e^{-βH} / tr e^{-βH}.
//
// # Safety
// `h` must be a live matrix handle; `out` must be writable.
enum TkStatus tk_state_gibbs(const struct TkMatrix *h, double beta, struct TkState **out);

// # Safety
// `s` must be null or a handle from this library, not yet freed.
void tk_state_free(struct TkState *s);

// tr(ϱP) for a projection P.
//
// # Safety
// Handles must be live; `out` must be writable.
enum TkStatus tk_state_probability(const struct TkState *s, const struct TkMatrix *p, double *out);

// The maximal context of the standard basis.
//
// # Safety
// `out` must be writable.
enum TkStatus tk_context_diagonal(size_t dim, struct TkContext **out);

// The context {P, I - P}.
//
// # Safety
// `p` must be a live matrix handle; `out` must be writable.
enum TkStatus tk_context_binary(const struct TkMatrix *p, struct TkContext **out);

// # Safety
// `c` must be null or a handle from this library, not yet freed.
void tk_context_free(struct TkContext *c);

// Number of minimal projections (characters) of the context.
//
// # Safety
// `c` must be a live context handle.
size_t tk_context_num_blocks(const struct TkContext *c);

// Block `k` of the context in canonical order, as a new matrix.
//
// # Safety
// `c` must be a live context handle; `out` must be writable.
enum TkStatus tk_context_block(const struct TkContext *c, size_t k, struct TkMatrix **out);

// The smallest projection of the context dominating P.
//
// # Safety
// Handles must be live; `out` must be writable.
enum TkStatus tk_outer_daseinisation(const struct TkMatrix *p,
                                     const struct TkContext *c,
                                     struct TkMatrix **out);

// Runs a JSON scenario and returns the JSON report.
//
// Returns `Ok` when every check passes and `ChecksFailed` when some fail; in both cases
// `*report` receives the report, to be released with [`tk_string_free`]. Input errors leave
// `*report` null.
//
// # Safety
// `scenario_json` must be a NUL-terminated string; `report` must be writable.
enum TkStatus tk_run_scenario(const char *scenario_json, char **report);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void tk_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TOPOSKMS_H */
