#ifndef CODETATIONS_H
#define CODETATIONS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Zero is success.
 */
typedef enum {
  CDT_STATUS_OK = 0,
  CDT_STATUS_NULL_ARGUMENT = 1,
  CDT_STATUS_BAD_UTF8 = 2,
  CDT_STATUS_INVALID = 3,
  CDT_STATUS_OUT_OF_BOUNDS = 4,
  CDT_STATUS_NOT_FOUND = 5,
  CDT_STATUS_AMBIGUOUS = 6,
  CDT_STATUS_STALE = 7,
  CDT_STATUS_IO = 8,
  CDT_STATUS_PARSE = 9,
  CDT_STATUS_PROVIDER = 10,
  CDT_STATUS_PANIC = 11,
  CDT_STATUS_PRECONDITION = 12,
} CdtStatus;

/**
 * Opaque handle to an opened repository.
 */
typedef struct CdtRepo CdtRepo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or null.
 * The pointer stays valid until the next call on this thread.
 */
const char *cdt_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void cdt_string_free(char *s);

/**
 * Opens the repository rooted at `root`.
 *
 * # Safety
 * `root` must be a NUL-terminated string; `out` must be writable.
 */
CdtStatus cdt_repo_open(const char *root, CdtRepo **out);

/**
 * Closes a handle from [`cdt_repo_open`]. Null is ignored.
 *
 * # Safety
 * `repo` must not be used afterwards.
 */
void cdt_repo_free(CdtRepo *repo);

/**
 * Writes the annotations of `path` as a JSON array.
 *
 * # Safety
 * Pointers must be valid; `out_json` receives an owned string.
 */
CdtStatus cdt_list(const CdtRepo *repo, const char *path, char **out_json);

/**
 * Annotates `[start, end)` of `path`. `data_json` may be null.
 * The new tag is written to `out_json`.
 *
 * # Safety
 * Pointers must be valid; `out_json` receives an owned string.
 */
CdtStatus cdt_add(const CdtRepo *repo,
                  const char *path,
                  uintptr_t start,
                  uintptr_t end,
                  const char *annotation_type,
                  const char *data_json,
                  char **out_json);

/**
 * Removes the tag with id (or unique id prefix) `id`.
 *
 * # Safety
 * Pointers must be valid.
 */
CdtStatus cdt_remove(const CdtRepo *repo, const char *path, const char *id);

/**
 * Writes `{"path", "state", "orphaned"}` for `path`.
 *
 * # Safety
 * Pointers must be valid; `out_json` receives an owned string.
 */
CdtStatus cdt_check(const CdtRepo *repo, const char *path, char **out_json);

/**
 * Re-anchors detached tags of `path` with strategy `exact`, `fuzzy` or
 * `semantic` (semantic uses the configured provider). With `accept_all`
 * every proposal is applied and the sidecar saved; otherwise nothing is
 * written. The plan is reported as JSON.
 *
 * # Safety
 * Pointers must be valid; `out_json` receives an owned string.
 */
CdtStatus cdt_reattach(const CdtRepo *repo,
                       const char *path,
                       const char *strategy,
                       bool accept_all,
                       char **out_json);

/**
 * Writes a layered copy of the repository to `out_dir`. `layers_csv` is a
 * comma-separated list of layer names in splice order (may be empty).
 *
 * # Safety
 * Pointers must be valid; `out_json` receives an owned string.
 */
CdtStatus cdt_apply_layers(const CdtRepo *repo,
                           const char *layers_csv,
                           const char *out_dir,
                           char **out_json);

/**
 * Normalized edit similarity of two strings, in `[0, 1]`.
 *
 * # Safety
 * Pointers must be valid.
 */
CdtStatus cdt_similarity(const char *a, const char *b, double *out);

/**
 * Maps offset `x` of a document of `doc_len` scalars through the edit that
 * replaces `deleted_length` scalars at `position` with `inserted_text`.
 *
 * # Safety
 * Pointers must be valid.
 */
CdtStatus cdt_map_position(uintptr_t x,
                           uintptr_t position,
                           uintptr_t deleted_length,
                           const char *inserted_text,
                           bool right_bias,
                           uintptr_t doc_len,
                           uintptr_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CODETATIONS_H */
