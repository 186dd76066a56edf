#ifndef D2SIM_H
#define D2SIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Written into color buffers for processes that never got a color.
#define D2_UNCOLORED INT64_MIN

typedef enum D2Protocol {
  D2_PROTOCOL_SEQ_TREE = 0,
  D2_PROTOCOL_PAR_TREE = 1,
  D2_PROTOCOL_ARBITRARY = 2,
} D2Protocol;

typedef enum D2RunStatus {
  D2_RUN_STATUS_ROOT_CLAIMED = 0,
  D2_RUN_STATUS_ALL_TERMINAL = 1,
  D2_RUN_STATUS_PARTIAL = 2,
  D2_RUN_STATUS_BUDGET_EXHAUSTED = 3,
} D2RunStatus;

typedef enum D2Status {
  D2_STATUS_OK = 0,
  D2_STATUS_NULL_ARGUMENT = 1,
  D2_STATUS_INVALID_UTF8 = 2,
  D2_STATUS_INVALID_TOPOLOGY = 3,
  D2_STATUS_INVALID_ARGUMENT = 4,
  D2_STATUS_PROTOCOL_FAILURE = 5,
  D2_STATUS_INVALID_TRACE = 6,
  D2_STATUS_BUFFER_TOO_SMALL = 7,
  D2_STATUS_PANIC = 8,
} D2Status;

typedef struct D2Outcome D2Outcome;

typedef struct D2Report D2Report;

typedef struct D2Topology D2Topology;

// Scenario knobs. Start from [`d2_run_options_default`].
typedef struct D2RunOptions {
  enum D2Protocol protocol;
  // 1-based process index.
  size_t root;
  int64_t start_round;
  uint64_t max_rounds;
  bool end_phase;
  bool sibling_end_parallel;
  bool root_always_ends;
  // Keep going after a clash instead of failing the run.
  bool record_and_corrupt;
  // Pin the traversal choices of the five-process example.
  bool pin_table1_choices;
  bool literal_refusal;
} D2RunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library from the same thread.
const char *d2_last_error(void);

// # Safety
// `s` is null or a string returned by this library that was not freed yet.
void d2_string_free(char *s);

// # Safety
// `name` is a NUL-terminated string; `out` is writable.
enum D2Status d2_topology_builtin(const char *name, struct D2Topology **out);

// # Safety
// `out` is writable.
enum D2Status d2_topology_random_tree(size_t n,
                                      size_t max_degree,
                                      uint64_t seed,
                                      struct D2Topology **out);

// # Safety
// `out` is writable.
enum D2Status d2_topology_random_graph(size_t n,
                                       size_t extra_edges,
                                       uint64_t seed,
                                       struct D2Topology **out);

// Parses the JSON topology file format.
//
// # Safety
// `json` is a NUL-terminated string; `out` is writable.
enum D2Status d2_topology_from_json(const char *json, struct D2Topology **out);

// # Safety
// `topology` is null or a live handle.
char *d2_topology_to_json(const struct D2Topology *topology);

// Process count; 0 for a null handle.
//
// # Safety
// `topology` is null or a live handle.
size_t d2_topology_n(const struct D2Topology *topology);

// Maximum degree; 0 for a null handle.
//
// # Safety
// `topology` is null or a live handle.
size_t d2_topology_max_degree(const struct D2Topology *topology);

// # Safety
// `topology` is null or a handle not freed yet.
void d2_topology_free(struct D2Topology *topology);

// Defaults: root 1, start round 0, a budget of one million rounds, END
// phase on, fail on the first clash.
struct D2RunOptions d2_run_options_default(enum D2Protocol protocol);

// Runs one simulation. A clash or protocol violation returns
// [`D2Status::ProtocolFailure`] and leaves `*out` untouched.
//
// # Safety
// `topology` is a live handle, `options` points to a valid struct and
// `out` is writable.
enum D2Status d2_run(const struct D2Topology *topology,
                     const struct D2RunOptions *options,
                     struct D2Outcome **out);

// # Safety
// `outcome` is a live handle.
enum D2RunStatus d2_outcome_status(const struct D2Outcome *outcome);

// Number of executed rounds; 0 for a null handle.
//
// # Safety
// `outcome` is null or a live handle.
int64_t d2_outcome_rounds(const struct D2Outcome *outcome);

// Process count after joins; 0 for a null handle.
//
// # Safety
// `outcome` is null or a live handle.
size_t d2_outcome_n(const struct D2Outcome *outcome);

// Copies final colors into `buf` (one per process, [`D2_UNCOLORED`] where
// missing) and stores the count in `*written`. With a short buffer nothing
// is copied, `*written` holds the required length and the call returns
// [`D2Status::BufferTooSmall`].
//
// # Safety
// `outcome` is a live handle, `buf` has room for `len` values (or is null
// when `len` is 0) and `written` is writable.
enum D2Status d2_outcome_colors(const struct D2Outcome *outcome,
                                int64_t *buf,
                                size_t len,
                                size_t *written);

// The recorded trace as JSON lines; free with [`d2_string_free`].
//
// # Safety
// `outcome` is null or a live handle.
char *d2_outcome_trace_jsonl(const struct D2Outcome *outcome);

// # Safety
// `outcome` is null or a handle not freed yet.
void d2_outcome_free(struct D2Outcome *outcome);

// Verifies the trace of a finished run.
//
// # Safety
// `outcome` is a live handle; `out` is writable.
enum D2Status d2_verify_outcome(const struct D2Outcome *outcome, struct D2Report **out);

// Parses and verifies a JSON-lines trace.
//
// # Safety
// `jsonl` is a NUL-terminated string; `out` is writable.
enum D2Status d2_verify_trace_jsonl(const char *jsonl, struct D2Report **out);

// Every gating check passed; false for a null handle.
//
// # Safety
// `report` is null or a live handle.
bool d2_report_passed(const struct D2Report *report);

// # Safety
// `report` is null or a live handle.
bool d2_report_consistent(const struct D2Report *report);

// # Safety
// `report` is null or a live handle.
size_t d2_report_clash_events(const struct D2Report *report);

// The report as JSON lines; free with [`d2_string_free`].
//
// # Safety
// `report` is null or a live handle.
char *d2_report_jsonl(const struct D2Report *report);

// # Safety
// `report` is null or a handle not freed yet.
void d2_report_free(struct D2Report *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2SIM_H */
