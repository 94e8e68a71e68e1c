#ifndef EXWALK_H
#define EXWALK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum ExwalkStatus {
  EXWALK_STATUS_OK = 0,
  EXWALK_STATUS_NULL_POINTER = 1,
  EXWALK_STATUS_INVALID_ARGUMENT = 2,
  EXWALK_STATUS_LINE_OUT_OF_RANGE = 3,
  EXWALK_STATUS_NEVER_UNREVEALED = 4,
  EXWALK_STATUS_COORDINATE_OVERFLOW = 5,
  EXWALK_STATUS_IO = 6,
  EXWALK_STATUS_INTERNAL = 7,
} ExwalkStatus;

// Opaque single-walk exceptional construction.
typedef struct ExwalkExceptionalRun ExwalkExceptionalRun;

// Opaque letter stream over `2d` directions.
typedef struct ExwalkLetterStream ExwalkLetterStream;

// Walk position and clocks.
typedef struct ExwalkWalkState {
  int64_t x;
  int64_t y;
  uint64_t letters;
  uint64_t accepted;
  // Index of the gap currently being revealed.
  uint32_t stage;
} ExwalkWalkState;

// Back-crossing estimate; `ci_lo`/`ci_hi` are NaN when nothing was decided.
typedef struct ExwalkEnEstimate {
  uint32_t n;
  uint64_t trials;
  uint64_t hits;
  uint64_t completions;
  uint64_t censored;
  double p_hat;
  double ci_lo;
  double ci_hi;
  uint64_t master_seed;
  uint64_t stream_id;
  uint64_t horizon;
} ExwalkEnEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next exwalk call on this thread.
const char *exwalk_last_error(void);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void exwalk_string_free(char *s);

// Create a letter stream for dimension `dim` (1..=6).
//
// # Safety
// `out` must be a valid pointer to write the handle to.
enum ExwalkStatus exwalk_letter_stream_new(uint64_t master_seed,
                                           uint64_t stream_id,
                                           size_t dim,
                                           struct ExwalkLetterStream **out);

// Write the next `len` letter codes into `buf`. Code `2a` is the positive
// direction of axis `a`, `2a + 1` the negative one.
//
// # Safety
// `h` must be a live handle and `buf` must hold `len` bytes.
enum ExwalkStatus exwalk_letter_stream_fill(struct ExwalkLetterStream *h, uint8_t *buf, size_t len);

// Letters emitted so far, or 0 for a NULL handle.
//
// # Safety
// `h` must be NULL or a live handle.
uint64_t exwalk_letter_stream_position(const struct ExwalkLetterStream *h);

// # Safety
// `h` must be NULL or a live handle; it is invalid afterwards.
void exwalk_letter_stream_free(struct ExwalkLetterStream *h);

// # Safety
// `out` must be a valid pointer to write the handle to.
enum ExwalkStatus exwalk_exceptional_new(uint64_t master_seed,
                                         uint64_t stream_id,
                                         struct ExwalkExceptionalRun **out);

// Read `letters` letters, stopping early once the open gap index reaches
// `max_stage` (pass 0 for no stage limit).
//
// # Safety
// `h` must be a live handle; `state` may be NULL.
enum ExwalkStatus exwalk_exceptional_run(struct ExwalkExceptionalRun *h,
                                         uint64_t letters,
                                         uint32_t max_stage,
                                         struct ExwalkWalkState *state);

// # Safety
// `h` must be a live handle and `state` a valid pointer.
enum ExwalkStatus exwalk_exceptional_state(const struct ExwalkExceptionalRun *h,
                                           struct ExwalkWalkState *state);

// Edge snapshot of the revealed extent as a newly allocated string; free
// it with [`exwalk_string_free`].
//
// # Safety
// `h` must be a live handle and `out` a valid pointer.
enum ExwalkStatus exwalk_exceptional_snapshot(const struct ExwalkExceptionalRun *h, char **out);

// # Safety
// `h` must be NULL or a live handle; it is invalid afterwards.
void exwalk_exceptional_free(struct ExwalkExceptionalRun *h);

// Estimate the probability that after first reaching line `n` the walk
// hits line `n - 1` before line `n + 1`; trials use at most `horizon`
// letters each.
//
// # Safety
// `out` must be a valid pointer.
enum ExwalkStatus exwalk_estimate_en(uint32_t n,
                                     uint64_t trials,
                                     uint64_t master_seed,
                                     uint64_t stream_id,
                                     uint64_t horizon,
                                     struct ExwalkEnEstimate *out);

// Probability `1/n` that a fair walk from 1 reaches `n` before 0.
//
// # Safety
// `out` must be a valid pointer.
enum ExwalkStatus exwalk_gambler_exact(uint64_t n, double *out);

// Expected visits to 0 of the simple random walk at times `1..=steps`.
double exwalk_local_time_exact(uint64_t steps);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXWALK_H */
