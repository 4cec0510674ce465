#ifndef LEVELSET_H
#define LEVELSET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  // A check found a violation; the output is still written.
  LS_STATUS_VIOLATION = 1,
  LS_STATUS_INVALID_INPUT = 2,
  LS_STATUS_REDUNDANT_REPORT = 3,
  LS_STATUS_NOT_ORDERABLE = 4,
  LS_STATUS_NO_CONVERGENCE = 5,
  LS_STATUS_FAILURE = 6,
  LS_STATUS_NULL_POINTER = 7,
  LS_STATUS_BUFFER_TOO_SMALL = 8,
  LS_STATUS_PANIC = 9,
} LsStatus;

typedef enum LsClaim {
  LS_CLAIM_IE = 0,
  LS_CLAIM_STRONG_IE = 1,
} LsClaim;

// Opaque surrogate loss.
typedef struct LsSurrogate LsSurrogate;

// Opaque target loss.
typedef struct LsTarget LsTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next call.
const char *ls_last_error_message(void);

// # Safety
// `s` must come from this library or be NULL.
void ls_string_free(char *s);

// Parses `{"n", "k", "loss", "labels"}`.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_target_from_json(const char *json, struct LsTarget **out);

// Built-in target such as `ordinal:4`, `abstain:1/4` or `ce-l2`.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_target_named(const char *name, struct LsTarget **out);

// # Safety
// `t` must come from this library or be NULL.
void ls_target_free(struct LsTarget *t);

// # Safety
// Pointers must be valid.
enum LsStatus ls_target_dims(const struct LsTarget *t, size_t *out_k, size_t *out_n);

// Optimal reports at `p` (length `n`), written to `out_reports` in
// increasing order. `*out_len` receives the count even when the buffer is
// too small.
//
// # Safety
// `p` must hold `n` doubles and `out_reports` `cap` entries.
enum LsStatus ls_target_gamma(const struct LsTarget *t,
                              const double *p,
                              size_t n,
                              double tie_tol,
                              size_t *out_reports,
                              size_t cap,
                              size_t *out_len);

// Orderability certificate as JSON.
//
// # Safety
// `t` must be valid; `out_json` writable.
enum LsStatus ls_target_orderability_json(const struct LsTarget *t, char **out_json);

// Parses a surrogate description (`{"builtin": ...}` or
// `{"piecewise_quadratic_1d": ...}`).
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_surrogate_from_json(const char *json, struct LsSurrogate **out);

// Built-in surrogate such as `ce`, `cusp` or `universal:4`.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum LsStatus ls_surrogate_named(const char *name, struct LsSurrogate **out);

// # Safety
// `s` must come from this library or be NULL.
void ls_surrogate_free(struct LsSurrogate *s);

// # Safety
// Pointers must be valid.
enum LsStatus ls_surrogate_dims(const struct LsSurrogate *s, size_t *out_d, size_t *out_n);

// Minimizes `<p, L(u)>`. Writes a minimizer to `out_u` (length `d`), the
// optimal value and whether the minimizer is unique.
//
// # Safety
// `p` must hold `n` doubles, `out_u` `d` doubles; outputs writable.
enum LsStatus ls_minimize(const struct LsSurrogate *s,
                          const double *p,
                          size_t n,
                          double *out_u,
                          size_t d,
                          double *out_value,
                          bool *out_unique);

// IE or strong IE on a simplex grid of spacing `resolution`. Returns
// `LS_STATUS_VIOLATION` with the certificate in `out_json` when violated.
//
// # Safety
// Handles must be valid; `out_json` writable.
enum LsStatus ls_check(const struct LsSurrogate *s,
                       const struct LsTarget *t,
                       enum LsClaim claim,
                       double resolution,
                       char **out_json);

// Calibrated 1-d surrogate for an orderable target. `out_json` receives
// `{"surrogate", "link", "enumeration", "beta", "certificates"}`; the
// surrogate object can be passed to [`ls_surrogate_from_json`] and the link
// to [`ls_calibration_gap`].
//
// # Safety
// `t` must be valid; `out_json` writable.
enum LsStatus ls_construct_1d(const struct LsTarget *t, char **out_json);

// Calibration gap at `p`. `link_json` may be NULL to choose a link
// automatically. Returns `LS_STATUS_VIOLATION` when the gap is within
// tolerance of zero. `out_gap` is infinite when no wrongly-linked report
// was found.
//
// # Safety
// Handles must be valid, `p` must hold `n` doubles; outputs writable.
// `out_json` may be NULL.
enum LsStatus ls_calibration_gap(const struct LsSurrogate *s,
                                 const struct LsTarget *t,
                                 const char *link_json,
                                 const double *p,
                                 size_t n,
                                 double *out_gap,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEVELSET_H */
