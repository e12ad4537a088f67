#ifndef FUSECC_H
#define FUSECC_H

/* Generated by the fusecc-ffi build script; edit src/lib.rs instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point. Anything other than
 * `Ok` leaves a message retrievable via `fusecc_last_error`.
 */
typedef enum FuseccStatus {
  FuseccStatus_Ok = 0,
  FuseccStatus_NullArgument = 1,
  FuseccStatus_InvalidUtf8 = 2,
  FuseccStatus_BadCheckpoint = 3,
  FuseccStatus_LexError = 4,
  FuseccStatus_ModelError = 5,
  FuseccStatus_Panic = 6,
} FuseccStatus;

/**
 * Completion engine behind an opaque pointer: a loaded hybrid model plus
 * the vocabulary it was trained with.
 */
typedef struct FuseccEngine FuseccEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; never free it.
 */
const char *fusecc_last_error(void);

/**
 * Opens the checkpoint at `path` (NUL-terminated UTF-8) and stores an
 * engine handle in `out`. The handle must be released with
 * `fusecc_engine_free`.
 */
enum FuseccStatus fusecc_engine_open(const char *path, struct FuseccEngine **out);

/**
 * Vocabulary size of the loaded engine; 0 for a null handle.
 */
size_t fusecc_engine_vocab_size(const struct FuseccEngine *engine);

/**
 * Greedily completes `prompt` with up to `max_new` tokens and stores a
 * newly allocated NUL-terminated string of space-joined tokens in `out`.
 * Free the string with `fusecc_string_free`.
 */
enum FuseccStatus fusecc_engine_complete(const struct FuseccEngine *engine,
                                         const char *prompt,
                                         size_t max_new,
                                         char **out);

/**
 * Frees a string returned by `fusecc_engine_complete`. Null is a no-op.
 */
void fusecc_string_free(char *text);

/**
 * Frees an engine returned by `fusecc_engine_open`. Null is a no-op.
 */
void fusecc_engine_free(struct FuseccEngine *engine);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FUSECC_H */
