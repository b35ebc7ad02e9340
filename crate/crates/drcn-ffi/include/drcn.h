#ifndef DRCN_H
#define DRCN_H

/* Generated by cbindgen from the drcn-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible entry point.
 */
typedef enum DrcnStatus {
  DRCN_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8, empty sentence or wrong buffer size.
   */
  DRCN_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Checkpoint or vocabulary files unreadable or malformed.
   */
  DRCN_STATUS_LOAD_ERROR = 2,
  /**
   * The forward pass failed (non-finite values, internal error).
   */
  DRCN_STATUS_NUMERIC_ERROR = 3,
} DrcnStatus;

/**
 * Opaque model handle: a loaded checkpoint plus its vocabularies.
 */
typedef struct DrcnHandle DrcnHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Never null; empty when
 * no error has occurred. The pointer stays valid until the next failing call
 * on the same thread.
 */
const char *drcn_last_error(void);

/**
 * Load a checkpoint written by `drcn train`. `vocab_words.tsv` and
 * `vocab_chars.tsv` are expected next to the checkpoint file. Returns null
 * on failure; consult [`drcn_last_error`].
 *
 * # Safety
 * `checkpoint_path` must be a valid NUL-terminated string or null.
 */
struct DrcnHandle *drcn_load(const char *checkpoint_path);

/**
 * Release a handle returned by [`drcn_load`]. Null is ignored.
 *
 * # Safety
 * `handle` must be null or a pointer previously returned by [`drcn_load`]
 * that has not been freed yet.
 */
void drcn_free(struct DrcnHandle *handle);

/**
 * Number of output classes of the loaded model, or 0 for a null handle.
 *
 * # Safety
 * `handle` must be null or a live handle from [`drcn_load`].
 */
uintptr_t drcn_num_classes(const struct DrcnHandle *handle);

/**
 * Classify one sentence pair. `probs_out` receives `probs_len` class
 * probabilities summing to 1; `probs_len` must equal
 * [`drcn_num_classes`]. Runs the deterministic evaluation forward pass.
 *
 * # Safety
 * `handle` must be a live handle; `premise`/`hypothesis` valid
 * NUL-terminated strings; `probs_out` must point to `probs_len` writable
 * doubles.
 */
enum DrcnStatus drcn_classify(const struct DrcnHandle *handle,
                              const char *premise,
                              const char *hypothesis,
                              double *probs_out,
                              uintptr_t probs_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRCN_H */
