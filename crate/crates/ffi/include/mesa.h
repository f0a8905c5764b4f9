#ifndef MESA_H
#define MESA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum MesaStatus {
  MESA_STATUS_OK = 0,
  MESA_STATUS_NULL_ARGUMENT = 1,
  MESA_STATUS_INVALID_UTF8 = 2,
  MESA_STATUS_IO = 3,
  MESA_STATUS_PARSE = 4,
  MESA_STATUS_INVALID_ARGUMENT = 5,
  MESA_STATUS_BACKEND = 6,
  MESA_STATUS_ROUTING = 7,
  MESA_STATUS_PANIC = 99,
} MesaStatus;

typedef enum MesaFormat {
  MESA_FORMAT_TEXT = 0,
  MESA_FORMAT_CSV = 1,
  MESA_FORMAT_MACHINE = 2,
} MesaFormat;

/**
 * A model backend (scripted or cache replay).
 */
typedef struct MesaBackend MesaBackend;

/**
 * Loaded skill cards.
 */
typedef struct MesaRegistry MesaRegistry;

/**
 * Results of a matrix run.
 */
typedef struct MesaReport MesaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next mesa call on the same thread.
 */
const char *mesa_last_error(void);

/**
 * Library version as a static string.
 */
const char *mesa_version(void);

/**
 * # Safety
 * `s` must come from a mesa function that returns an owned string, and
 * must not be used afterwards. NULL is ignored.
 */
void mesa_string_free(char *s);

/**
 * Loads a card file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MesaStatus mesa_registry_load(const char *path, struct MesaRegistry **out);

/**
 * Number of cards, or 0 for NULL.
 *
 * # Safety
 * `reg` must be NULL or a live registry handle.
 */
size_t mesa_registry_len(const struct MesaRegistry *reg);

/**
 * Lint diagnostics, one `id:code:message` per line. `*count` receives the
 * number of diagnostics.
 *
 * # Safety
 * `reg` must be a live registry handle; `out` and `count` must be writable.
 */
enum MesaStatus mesa_registry_lint(const struct MesaRegistry *reg, char **out, size_t *count);

/**
 * # Safety
 * `reg` must be NULL or a handle from `mesa_registry_load` not yet freed.
 */
void mesa_registry_free(struct MesaRegistry *reg);

/**
 * Loads a behavior script as a deterministic backend.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MesaStatus mesa_backend_scripted(const char *path, struct MesaBackend **out);

/**
 * Opens a response cache in strict replay mode.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MesaStatus mesa_backend_replay(const char *path, struct MesaBackend **out);

/**
 * # Safety
 * `backend` must be NULL or a backend handle not yet freed.
 */
void mesa_backend_free(struct MesaBackend *backend);

/**
 * Runs the condition matrix with default routing settings.
 *
 * `conditions` is a comma-separated list of names, or NULL for all seven.
 * When `strict_sizes` is non-zero the suite must hold 50 items per slice.
 * A scripted backend is coverage-checked before any item runs.
 *
 * # Safety
 * Pointers must be valid; `conditions` may be NULL; `out` must be writable.
 */
enum MesaStatus mesa_eval(const char *suite_path,
                          const struct MesaRegistry *reg,
                          const struct MesaBackend *backend,
                          const char *conditions,
                          int32_t strict_sizes,
                          struct MesaReport **out);

/**
 * Accuracy of one cell. `slice` is 'A', 'B', 'C', or 'O' for overall.
 *
 * # Safety
 * `report` must be a live report handle; `condition` a NUL-terminated
 * string; `out` writable.
 */
enum MesaStatus mesa_report_accuracy(const struct MesaReport *report,
                                     const char *condition,
                                     char slice,
                                     double *out);

/**
 * Renders a report as text, CSV or machine-readable JSON.
 *
 * # Safety
 * `report` must be a live report handle; `out` writable.
 */
enum MesaStatus mesa_report_render(const struct MesaReport *report,
                                   enum MesaFormat format,
                                   char **out);

/**
 * # Safety
 * `report` must be NULL or a report handle not yet freed.
 */
void mesa_report_free(struct MesaReport *report);

/**
 * Routes one prompt against every card in `reg` and writes the trajectory
 * as JSON. `item_id` selects the script rows the backend answers from.
 *
 * # Safety
 * All pointers must be valid NUL-terminated strings or live handles;
 * `out` writable.
 */
enum MesaStatus mesa_route(const struct MesaRegistry *reg,
                           const struct MesaBackend *backend,
                           const char *item_id,
                           const char *prompt,
                           const char *condition,
                           char **out);

/**
 * Pooled two-proportion z-test.
 *
 * # Safety
 * `z` and `p` must be writable.
 */
enum MesaStatus mesa_two_prop_ztest(uint64_t k1,
                                    uint64_t n1,
                                    uint64_t k2,
                                    uint64_t n2,
                                    double *z,
                                    double *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESA_H */
