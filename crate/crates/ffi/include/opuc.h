/* C interface to the opuc spectral-measure library. */

#ifndef OPUC_H
#define OPUC_H

/* Generated by cbindgen from the opuc-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.  Anything other than `Ok` stores a message
 * retrievable through `opuc_last_error`.
 */
typedef enum OpucStatus {
  /**
   * Success.
   */
  OpucStatus_Ok = 0,
  /**
   * A required pointer argument was NULL.
   */
  OpucStatus_NullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  OpucStatus_InvalidUtf8 = 2,
  /**
   * Malformed JSON or a value outside the documented schema.
   */
  OpucStatus_Parse = 3,
  /**
   * Structurally valid input outside the function's domain.
   */
  OpucStatus_Domain = 4,
  /**
   * Internal consistency failure: a bug in the library, not bad input.
   */
  OpucStatus_Internal = 5,
} OpucStatus;

/**
 * Measure behind an opaque pointer.
 */
typedef struct OpucMeasure OpucMeasure;

/**
 * Coefficient sequence behind an opaque pointer.
 */
typedef struct OpucSequence OpucSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a heap string; release with `opuc_string_free`.
 */
char *opuc_version(void);

/**
 * Message from the most recent failing call on this thread, as a heap
 * string released with `opuc_string_free`.  NULL when nothing has
 * failed yet.
 */
char *opuc_last_error(void);

/**
 * Release a string returned by this library.  NULL is accepted.
 *
 * # Safety
 * `s` must have been returned by a function in this library and not
 * already freed.
 */
void opuc_string_free(char *s);

/**
 * Parse a coefficient sequence from JSON: a full sequence object with
 * "prefix" / "tail" / "real" fields, or a closed-form reference such as
 * {"closed_form": "zero"}.  On success `*out` owns the sequence;
 * release it with `opuc_sequence_free`.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to a writable
 * pointer slot; both must stay valid for the duration of the call.
 */
enum OpucStatus opuc_sequence_parse(const char *json, struct OpucSequence **out);

/**
 * Serialize a sequence handle back to its JSON object form.
 *
 * # Safety
 * `seq` must be a live handle from this library; `out` must point to a
 * writable string slot.
 */
enum OpucStatus opuc_sequence_to_json(const struct OpucSequence *seq, char **out);

/**
 * Length of a terminated sequence, or SIZE_MAX when the sequence
 * continues forever under its tail law.
 *
 * # Safety
 * `seq` must be a live handle; `out_len` must point to writable memory.
 */
enum OpucStatus opuc_sequence_len(const struct OpucSequence *seq, size_t *out_len);

/**
 * Whether every coefficient of the sequence is real.
 *
 * # Safety
 * `seq` must be a live handle; `out_real` must point to writable memory.
 */
enum OpucStatus opuc_sequence_is_real(const struct OpucSequence *seq, bool *out_real);

/**
 * Release a sequence handle.  NULL is accepted.
 *
 * # Safety
 * `seq` must have come from this library and not already be freed.
 */
void opuc_sequence_free(struct OpucSequence *seq);

/**
 * Parse a measure from JSON: a density spec with "density" /
 * "point_masses" fields, or a singular-point list under
 * "singular_points" denoting the normalized reference measure vanishing
 * at those points.  Release the handle with `opuc_measure_free`.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to a writable
 * pointer slot.
 */
enum OpucStatus opuc_measure_parse(const char *json, struct OpucMeasure **out);

/**
 * Serialize a measure handle back to its JSON object form.
 *
 * # Safety
 * `measure` must be a live handle; `out` must point to a writable
 * string slot.
 */
enum OpucStatus opuc_measure_to_json(const struct OpucMeasure *measure, char **out);

/**
 * Release a measure handle.  NULL is accepted.
 *
 * # Safety
 * `measure` must have come from this library and not already be freed.
 */
void opuc_measure_free(struct OpucMeasure *measure);

/**
 * Extract `count` recursion coefficients from a measure.  The sequence
 * comes back as a new handle in `*out`.
 *
 * # Safety
 * `measure` must be a live handle and `out` a writable pointer slot.
 */
enum OpucStatus opuc_coeffs_from_measure(const struct OpucMeasure *measure,
                                         size_t count,
                                         struct OpucSequence **out);

/**
 * Extract `count` recursion coefficients together with conditioning
 * diagnostics, as a JSON report with "coefficients",
 * "conditioning_warning", and "norms" fields.
 *
 * # Safety
 * `measure` must be a live handle and `out` a writable string slot.
 */
enum OpucStatus opuc_coeffs_report(const struct OpucMeasure *measure, size_t count, char **out);

/**
 * Reconstruct a spectral measure from a coefficient sequence: the exact
 * finitely supported measure when the sequence terminates within
 * `steps` coefficients, the truncated density on a 2^grid_log2 grid
 * otherwise.  Zero arguments select the defaults (64 steps, the
 * standard grid).
 *
 * # Safety
 * `seq` must be a live handle and `out` a writable pointer slot.
 */
enum OpucStatus opuc_measure_from_coeffs(const struct OpucSequence *seq,
                                         size_t steps,
                                         uint32_t grid_log2,
                                         struct OpucMeasure **out);

/**
 * Evaluate both sides of the sum rule `case_id` (szego, single_K,
 * roots_K, pair_11, mixed_21) on a sequence, reporting the truncation
 * ladder as JSON.  `base` and `grid_log2` accept 0 for the defaults.
 *
 * # Safety
 * `case_id` must be NUL-terminated, `seq` a live handle, `out` a
 * writable string slot.
 */
enum OpucStatus opuc_sum_rule_check(const char *case_id,
                                    const struct OpucSequence *seq,
                                    size_t base,
                                    uint32_t grid_log2,
                                    char **out);

/**
 * Evaluate the plain entropy sum rule from a sequence, a measure, or
 * both (each side is derived from whichever input carries it; at least
 * one of `seq` and `measure` must be non-NULL).
 *
 * # Safety
 * Non-NULL handles must be live; `out` must be a writable string slot.
 */
enum OpucStatus opuc_szego_sum_rule(const struct OpucSequence *seq,
                                    const struct OpucMeasure *measure,
                                    size_t base,
                                    uint32_t grid_log2,
                                    char **out);

/**
 * Classify each coefficient-side term of a case as finite or divergent,
 * as a JSON report with per-term verdicts and ladder partials.
 *
 * # Safety
 * `case_id` must be NUL-terminated, `seq` a live handle, `out` a
 * writable string slot.
 */
enum OpucStatus opuc_gem_verdict(const char *case_id,
                                 const struct OpucSequence *seq,
                                 size_t base,
                                 uint32_t grid_log2,
                                 char **out);

/**
 * Run a decay-condition scheme against a singular-point list.
 * `points_json` is an array of {"theta": T, "m": M} objects; `scheme`
 * is one of uniform, decomposed, leave-one-out, reduced, relaxed, or
 * NULL for uniform.
 *
 * # Safety
 * `seq` must be a live handle; `points_json` must be NUL-terminated;
 * `scheme` may be NULL, otherwise NUL-terminated; `out` must be a
 * writable string slot.
 */
enum OpucStatus opuc_classify(const struct OpucSequence *seq,
                              const char *points_json,
                              const char *scheme,
                              char **out);

/**
 * Expand the trace of the `power`-th matrix power into coefficient
 * monomials, as the JSON form of the symbolic decomposition.
 *
 * # Safety
 * `out` must be a writable string slot.
 */
enum OpucStatus opuc_trace_expand(size_t power, char **out);

/**
 * Check the discrete interpolation inequality on a finite sequence,
 * reporting both sides and the verdict as JSON.
 *
 * # Safety
 * `seq` must be a live handle and `out` a writable string slot.
 */
enum OpucStatus opuc_gn_check(const struct OpucSequence *seq, char **out);

/**
 * Sample a batch of random coefficient draws and report summary
 * statistics plus per-index distribution checks as JSON.
 *
 * Zero `n`, `draws`, or `bins` select the defaults (8, 100, 16).
 * `potential_json` is an optional tilt potential ({"cosine": [...]} or
 * {"coeffs": [...]}); `sampler` is "cue", "tilted", or NULL to pick
 * "tilted" exactly when a potential is given; `eta_json` optionally
 * names a singular-point list to append a binned distance report.
 *
 * # Safety
 * `potential_json`, `sampler`, and `eta_json` may each be NULL,
 * otherwise NUL-terminated; `out` must be a writable string slot.
 */
enum OpucStatus opuc_ensemble_sample(size_t n,
                                     size_t draws,
                                     uint64_t seed,
                                     const char *potential_json,
                                     const char *sampler,
                                     const char *eta_json,
                                     size_t bins,
                                     char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPUC_H */
