#ifndef VIZLM_H
#define VIZLM_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum VizlmStatus {
  VIZLM_STATUS_OK = 0,
  VIZLM_STATUS_NULL_ARGUMENT = 1,
  VIZLM_STATUS_INVALID_UTF8 = 2,
  VIZLM_STATUS_DATASET_ERROR = 3,
  VIZLM_STATUS_SYNTAX_ERROR = 4,
  VIZLM_STATUS_INVALID_SPEC = 5,
  VIZLM_STATUS_COMPILE_ERROR = 6,
  VIZLM_STATUS_RESPONSE_ERROR = 7,
  VIZLM_STATUS_INTERNAL = 99,
} VizlmStatus;

/**
 * Parsed VegaZero specification.
 */
typedef struct VizlmSpec VizlmSpec;

/**
 * Parsed tabular dataset.
 */
typedef struct VizlmTable VizlmTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library from this thread.
 */
const char *vizlm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vizlm_version(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void vizlm_string_free(char *s);

/**
 * Loads CSV bytes into a table with inferred column types.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `name` must be a C string.
 */
enum VizlmStatus vizlm_table_from_csv(const uint8_t *bytes,
                                      size_t len,
                                      const char *name,
                                      struct VizlmTable **out);

/**
 * Number of data rows, or 0 for NULL.
 *
 * # Safety
 * `table` must be NULL or a live handle.
 */
size_t vizlm_table_row_count(const struct VizlmTable *table);

/**
 * Column names and types as JSON.
 *
 * # Safety
 * `table` must be a live handle; `out` must be writable.
 */
enum VizlmStatus vizlm_table_sketch_json(const struct VizlmTable *table, char **out);

/**
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void vizlm_table_free(struct VizlmTable *table);

/**
 * Parses VegaZero text.
 *
 * # Safety
 * `src` must be a C string; `out` must be writable.
 */
enum VizlmStatus vizlm_spec_parse(const char *src, struct VizlmSpec **out);

/**
 * Canonical text of a spec.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be writable.
 */
enum VizlmStatus vizlm_spec_render(const struct VizlmSpec *spec, char **out);

/**
 * # Safety
 * `spec` must be NULL or a handle not yet freed.
 */
void vizlm_spec_free(struct VizlmSpec *spec);

/**
 * Checks a spec against a table. Writes a JSON array of violations, empty
 * when the spec is usable. Returns `VIZLM_STATUS_INVALID_SPEC` when it is not.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum VizlmStatus vizlm_validate_json(const struct VizlmSpec *spec,
                                     const struct VizlmTable *table,
                                     char **out);

/**
 * Compiles a spec over a table into a Vega-Lite JSON document.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum VizlmStatus vizlm_compile_json(const struct VizlmSpec *spec,
                                    const struct VizlmTable *table,
                                    char **out);

/**
 * Parses a model completion into JSON with `spec` (canonical text),
 * `narrative` and `lenient`. A nonzero `lenient` falls back to heuristic
 * extraction when the strict parse fails.
 *
 * # Safety
 * `completion` must be a C string; `out` must be writable.
 */
enum VizlmStatus vizlm_parse_response_json(const char *completion, int32_t lenient, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIZLM_H */
