#ifndef REPOSIM_H
#define REPOSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RS_OK 0

/**
 * A required pointer argument was null.
 */
#define RS_ERR_NULL 1

/**
 * A string argument was not valid UTF-8.
 */
#define RS_ERR_UTF8 2

/**
 * An argument was malformed, such as invalid JSON.
 */
#define RS_ERR_INVALID_ARGUMENT 3

/**
 * The configuration could not be loaded.
 */
#define RS_ERR_CONFIG 4

/**
 * The operation failed at run time.
 */
#define RS_ERR_RUNTIME 5

/**
 * Rust code panicked; the handle should not be used again.
 */
#define RS_ERR_PANIC 6

/**
 * Opaque tool service handle.
 */
typedef struct RsToolService RsToolService;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *rs_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rs_version(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rs_string_free(char *s);

/**
 * Create a tool service from TOML configuration text, or from defaults
 * when `config_toml` is null.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be
 * valid for writes.
 */
int32_t rs_service_new(const char *config_toml, struct RsToolService **out);

/**
 * Destroy a service. Null is ignored.
 *
 * # Safety
 * `service` must come from `rs_service_new` and not have been freed.
 */
void rs_service_free(struct RsToolService *service);

/**
 * Call a tool with JSON arguments. `out_json` receives the response
 * envelope; tool-level failures are error envelopes with status `RS_OK`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated. The service may be
 * shared across threads.
 */
int32_t rs_service_call(const struct RsToolService *service,
                        const char *tool,
                        const char *arguments_json,
                        char **out_json);

/**
 * Number of repository specs the service has built.
 *
 * # Safety
 * `service` must be valid and `out` valid for writes.
 */
int32_t rs_service_build_count(const struct RsToolService *service, size_t *out);

/**
 * Grade a raw response against one question item given as JSON.
 * `out_correct` receives 1 or 0; `out_result_json`, when not null, the
 * extracted answer and grade as JSON.
 *
 * # Safety
 * Strings must be NUL-terminated; `out_correct` valid for writes.
 */
int32_t rs_grade(const char *item_json,
                 const char *response,
                 int32_t *out_correct,
                 char **out_result_json);

/**
 * Seed for a named stage of a master seed.
 *
 * # Safety
 * `stage_label` must be NUL-terminated; `out` valid for writes.
 */
int32_t rs_derive_stage_seed(uint64_t master_seed, const char *stage_label, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPOSIM_H */
