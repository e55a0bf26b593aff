#ifndef RESEAT_H
#define RESEAT_H

/* Generated by cbindgen from the reseat-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Outcome of a call. Anything but `OK` leaves a message readable through
 [`reseat_last_error`] until the next call on the same thread.
 */
typedef enum ReseatStatus {
  RESEAT_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  RESEAT_STATUS_NULL_ARGUMENT = 1,
  /*
   An input string was not valid UTF-8.
   */
  RESEAT_STATUS_INVALID_UTF8 = 2,
  /*
   The document was not syntactically valid JSON of the expected shape.
   */
  RESEAT_STATUS_PARSE_ERROR = 3,
  /*
   The document parsed but violates a semantic rule, or the inputs are
   inconsistent with each other.
   */
  RESEAT_STATUS_INVALID_INPUT = 4,
  /*
   The change document is for the other setting than the function called.
   */
  RESEAT_STATUS_WRONG_DELTA_KIND = 5,
  /*
   No output satisfying the constraints exists, or a configured bound
   was exceeded.
   */
  RESEAT_STATUS_INFEASIBLE = 6,
  /*
   A self-check failed or a panic was caught at the boundary.
   */
  RESEAT_STATUS_INTERNAL_ERROR = 7,
} ReseatStatus;

/*
 A between-rounds change document of either kind. Opaque.
 */
typedef struct ReseatDelta ReseatDelta;

/*
 A validated market. Opaque.
 */
typedef struct ReseatInstance ReseatInstance;

/*
 An assignment of students to schools. Opaque.
 */
typedef struct ReseatMatching ReseatMatching;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Version of the library, as a static string. Never freed by the caller.
 */
const char *reseat_version(void);

/*
 Message from the most recent failing call on this thread, or null if the
 most recent call succeeded. The pointer is valid until the next call into
 the library on the same thread; do not free it.
 */
const char *reseat_last_error(void);

/*
 Releases a string obtained from a `char **` out-parameter.

 # Safety
 `s` must be null or a pointer previously returned by this library and
 not yet freed.
 */
void reseat_string_free(char *s);

/*
 Parses and validates a market document.

 # Safety
 `json` must be null or NUL-terminated; `out` must be a writable slot.
 On `OK`, `*out` owns the instance; release it with
 [`reseat_instance_free`].
 */
enum ReseatStatus reseat_instance_parse(const char *json, struct ReseatInstance **out);

/*
 Serializes a market in the canonical layout.

 # Safety
 `inst` must be a live handle; `out` must be a writable slot. On `OK`,
 `*out` is released with [`reseat_string_free`].
 */
enum ReseatStatus reseat_instance_to_json(const struct ReseatInstance *inst, char **out);

/*
 Releases an instance handle. Null is ignored.

 # Safety
 `inst` must be null or a live handle from this library; it is dead
 afterwards.
 */
void reseat_instance_free(struct ReseatInstance *inst);

/*
 Parses a matching document.

 # Safety
 `json` must be null or NUL-terminated; `out` must be a writable slot.
 On `OK`, `*out` owns the matching; release it with
 [`reseat_matching_free`].
 */
enum ReseatStatus reseat_matching_parse(const char *json, struct ReseatMatching **out);

/*
 Serializes a matching in the canonical layout.

 # Safety
 `m` must be a live handle; `out` must be a writable slot. On `OK`,
 `*out` is released with [`reseat_string_free`].
 */
enum ReseatStatus reseat_matching_to_json(const struct ReseatMatching *m, char **out);

/*
 Releases a matching handle. Null is ignored.

 # Safety
 `m` must be null or a live handle from this library; it is dead
 afterwards.
 */
void reseat_matching_free(struct ReseatMatching *m);

/*
 Parses a change document of either kind.

 # Safety
 `json` must be null or NUL-terminated; `out` must be a writable slot.
 On `OK`, `*out` owns the delta; release it with [`reseat_delta_free`].
 */
enum ReseatStatus reseat_delta_parse(const char *json, struct ReseatDelta **out);

/*
 Serializes a change document in the canonical layout.

 # Safety
 `delta` must be a live handle; `out` must be a writable slot. On `OK`,
 `*out` is released with [`reseat_string_free`].
 */
enum ReseatStatus reseat_delta_to_json(const struct ReseatDelta *delta, char **out);

/*
 Releases a delta handle. Null is ignored.

 # Safety
 `delta` must be null or a live handle from this library; it is dead
 afterwards.
 */
void reseat_delta_free(struct ReseatDelta *delta);

/*
 Applies a change document, producing the next round's market.

 # Safety
 `inst` and `delta` must be live handles; `out` must be a writable slot.
 On `OK`, `*out` owns the new instance; release it with
 [`reseat_instance_free`].
 */
enum ReseatStatus reseat_apply_delta(const struct ReseatInstance *inst,
                                     const struct ReseatDelta *delta,
                                     struct ReseatInstance **out);

/*
 Runs student-proposing deferred acceptance.

 # Safety
 `inst` must be a live handle; `out` must be a writable slot. On `OK`,
 `*out` owns the matching; release it with [`reseat_matching_free`].
 */
enum ReseatStatus reseat_student_proposing_da(const struct ReseatInstance *inst,
                                              struct ReseatMatching **out);

/*
 Runs school-proposing deferred acceptance.

 # Safety
 `inst` must be a live handle; `out` must be a writable slot. On `OK`,
 `*out` owns the matching; release it with [`reseat_matching_free`].
 */
enum ReseatStatus reseat_school_proposing_da(const struct ReseatInstance *inst,
                                             struct ReseatMatching **out);

/*
 Counts blocking pairs of `m` on `inst`; zero means stable.

 # Safety
 `inst` and `m` must be live handles; `out_count` must be a writable
 slot.
 */
enum ReseatStatus reseat_blocking_pair_count(const struct ReseatInstance *inst,
                                             const struct ReseatMatching *m,
                                             size_t *out_count);

/*
 Minimum re-allocation after school-side changes. `delta` must hold a
 school-side change document. On `OK`, `*out_matching` is the new stable
 matching and `*out_moved` the number of re-allocated students.

 # Safety
 `round1`, `m`, and `delta` must be live handles; `out_matching` and
 `out_moved` must be writable slots. On `OK`, `*out_matching` is released
 with [`reseat_matching_free`].
 */
enum ReseatStatus reseat_min_realloc_schools(const struct ReseatInstance *round1,
                                             const struct ReseatMatching *m,
                                             const struct ReseatDelta *delta,
                                             struct ReseatMatching **out_matching,
                                             size_t *out_moved);

/*
 Minimum re-allocation after student-side changes. `delta` must hold a
 student-side change document. On `OK`, `*out_matching` is the new stable
 matching and `*out_moved` the number of re-allocated students.

 # Safety
 `round1`, `m`, and `delta` must be live handles; `out_matching` and
 `out_moved` must be writable slots. On `OK`, `*out_matching` is released
 with [`reseat_matching_free`].
 */
enum ReseatStatus reseat_min_realloc_students(const struct ReseatInstance *round1,
                                              const struct ReseatMatching *m,
                                              const struct ReseatDelta *delta,
                                              struct ReseatMatching **out_matching,
                                              size_t *out_moved);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RESEAT_H */
