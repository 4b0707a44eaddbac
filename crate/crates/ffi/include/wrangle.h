#ifndef WRANGLE_H
#define WRANGLE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call. Numeric values are stable.
typedef enum WrangleStatus {
  WRANGLE_STATUS_OK = 0,
  // A required pointer argument was null.
  WRANGLE_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  WRANGLE_STATUS_INVALID_UTF8 = 2,
  // A JSON argument did not parse or did not match the expected shape.
  WRANGLE_STATUS_INVALID_JSON = 3,
  // The CSV could not be loaded or has no usable columns.
  WRANGLE_STATUS_INVALID_INPUT = 10,
  // Unknown column, wrong column kind or bad group spec.
  WRANGLE_STATUS_INVALID_COLUMN = 11,
  // Bad detector config or custom rule.
  WRANGLE_STATUS_INVALID_CONFIG = 12,
  // The request refers to a table version that no longer holds.
  WRANGLE_STATUS_STALE = 20,
  WRANGLE_STATUS_NOTHING_TO_UNDO = 21,
  WRANGLE_STATUS_NOTHING_TO_REDO = 22,
  // The action is well formed but cannot be applied.
  WRANGLE_STATUS_ACTION_FAILED = 30,
  WRANGLE_STATUS_UNSUPPORTED = 31,
  // An index argument is past the end of its list.
  WRANGLE_STATUS_OUT_OF_RANGE = 32,
  // The engine panicked; the handle involved should be freed.
  WRANGLE_STATUS_INTERNAL = 99,
} WrangleStatus;

// Opaque session handle.
typedef struct WrangleSession WrangleSession;

// Engine version as a static string; never free it.
const char *wrangle_version(void);

// Last error on this thread as JSON `{"code", "message"}`, or null when the
// previous call succeeded. Free with [`wrangle_string_free`].
char *wrangle_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void wrangle_string_free(char *s);

// Loads `csv_len` bytes of CSV and runs detection.
//
// `name`, `config_json` (a detector config object) and `specs_json` (an
// array of `{group_by, target, min_support}`) may be null for defaults.
//
// # Safety
// `csv` must point to `csv_len` readable bytes; string arguments must be
// NUL-terminated; `out` must be writable.
enum WrangleStatus wrangle_session_new(const uint8_t *csv,
                                       size_t csv_len,
                                       const char *name,
                                       const char *config_json,
                                       const char *specs_json,
                                       struct WrangleSession **out);

// Releases a session. Null is ignored.
//
// # Safety
// `s` must come from [`wrangle_session_new`] and not have been freed.
void wrangle_session_free(struct WrangleSession *s);

// Current table version; 0 for a null handle.
//
// # Safety
// `s` must be a live handle or null.
uint64_t wrangle_session_version(const struct WrangleSession *s);

// Anomaly records of the current version as a JSON array.
//
// # Safety
// `s` must be a live handle and `out` writable.
enum WrangleStatus wrangle_session_anomalies(struct WrangleSession *s, char **out);

// Ranked repair actions for the record at `record_index`, as a JSON array.
//
// # Safety
// `s` must be a live handle and `out` writable.
enum WrangleStatus wrangle_session_suggest(struct WrangleSession *s,
                                           size_t record_index,
                                           char **out);

// Applies one repair action given as JSON. `out` receives the committed
// entry (action, inverse, versions, diff); it may be null.
//
// # Safety
// `s` must be a live handle, `action_json` NUL-terminated.
enum WrangleStatus wrangle_session_commit(struct WrangleSession *s,
                                          const char *action_json,
                                          char **out);

// Reverts the latest action.
//
// # Safety
// `s` must be a live handle.
enum WrangleStatus wrangle_session_undo(struct WrangleSession *s);

// Re-applies the latest undone action.
//
// # Safety
// `s` must be a live handle.
enum WrangleStatus wrangle_session_redo(struct WrangleSession *s);

// Current table as CSV text.
//
// # Safety
// `s` must be a live handle and `out` writable.
enum WrangleStatus wrangle_session_table_csv(struct WrangleSession *s, char **out);

// Python source replaying the applied actions.
//
// # Safety
// `s` must be a live handle and `out` writable.
enum WrangleStatus wrangle_session_script(struct WrangleSession *s, char **out);

// Session export (fingerprint, config, specs, actions) as JSON.
//
// # Safety
// `s` must be a live handle and `out` writable.
enum WrangleStatus wrangle_session_export(struct WrangleSession *s, char **out);

#endif  /* WRANGLE_H */
