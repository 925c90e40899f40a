#ifndef CENSORLAB_H
#define CENSORLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ClProtocol {
  CL_PROTOCOL_DNS = 0,
  CL_PROTOCOL_HTTP = 1,
  CL_PROTOCOL_HTTPS = 2,
} ClProtocol;

typedef enum ClStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_NULL_POINTER = 1,
  CL_STATUS_INVALID_UTF8 = 2,
  CL_STATUS_PARSE = 3,
  CL_STATUS_NOT_FOUND = 4,
  CL_STATUS_INVALID = 5,
  CL_STATUS_FAILED = 6,
  CL_STATUS_PANIC = 7,
} ClStatus;

typedef enum ClVerdict {
  CL_VERDICT_CENSORED = 0,
  CL_VERDICT_NOT_CENSORED = 1,
  CL_VERDICT_INCONCLUSIVE = 2,
  CL_VERDICT_SOURCE_BAN_SUSPECTED = 3,
} ClVerdict;

// A rule set with a compiled multi-rule matcher.
typedef struct ClBlocklist ClBlocklist;

typedef struct ClStrategy ClStrategy;

// A scenario world with an outside prober attached.
typedef struct ClWorld ClWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread, or NULL. The
// pointer stays valid until the next call on the same thread.
const char *cl_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void cl_string_free(char *s);

// Library version as a static string.
const char *cl_version(void);

// Parses a rule and writes its canonical text to `*out`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum ClStatus cl_rule_canonicalize(const char *text, char **out_text);

// # Safety
// `out_handle` must be writable.
enum ClStatus cl_blocklist_new(struct ClBlocklist **out_handle);

// # Safety
// `h` must be a live blocklist handle; `rule` a NUL-terminated string.
enum ClStatus cl_blocklist_add_rule(struct ClBlocklist *h, const char *rule);

// # Safety
// `h` must be a live blocklist handle; `out_len` writable.
enum ClStatus cl_blocklist_len(const struct ClBlocklist *h, uintptr_t *out_len);

// Whether any rule blocks `name`.
//
// # Safety
// `h` must be a live blocklist handle; `name` a NUL-terminated string;
// `out_matched` writable.
enum ClStatus cl_blocklist_matches(const struct ClBlocklist *h,
                                   const char *name,
                                   bool *out_matched);

// # Safety
// `h` must be NULL or a blocklist handle not yet freed.
void cl_blocklist_free(struct ClBlocklist *h);

// # Safety
// `text` must be a NUL-terminated string; `out_handle` writable.
enum ClStatus cl_strategy_parse(const char *text, struct ClStrategy **out_handle);

// # Safety
// `name` must be a NUL-terminated string; `out_handle` writable.
enum ClStatus cl_strategy_builtin(const char *name, struct ClStrategy **out_handle);

// Canonical strategy text.
//
// # Safety
// `h` must be a live strategy handle; `out_text` writable.
enum ClStatus cl_strategy_text(const struct ClStrategy *h, char **out_text);

// # Safety
// `h` must be NULL or a strategy handle not yet freed.
void cl_strategy_free(struct ClStrategy *h);

// Builds a world from a scenario JSON document (blocklists inline).
//
// # Safety
// `json` must be a NUL-terminated string; `out_handle` writable.
enum ClStatus cl_world_from_scenario_json(const char *json, struct ClWorld **out_handle);

// One probe of `domain` against `target_ip` (host byte order). TCP
// protocols use a two-packet probe with `sleep_ms` between packets on
// port 80 or 443; `sleep_ms` is ignored for DNS.
//
// # Safety
// `h` must be a live world handle; `domain` a NUL-terminated string;
// `out_verdict` writable.
enum ClStatus cl_world_probe(struct ClWorld *h,
                             enum ClProtocol protocol,
                             const char *domain,
                             uint32_t target_ip,
                             uint64_t sleep_ms,
                             enum ClVerdict *out_verdict);

// # Safety
// `h` must be NULL or a world handle not yet freed.
void cl_world_free(struct ClWorld *h);

// Evaluates a strategy in worlds built from the scenario and writes the
// report as JSON to `*out_json`. `client_ip` is in host byte order.
//
// # Safety
// `strategy` must be a live strategy handle; `scenario_json` and `domain`
// NUL-terminated strings; `out_json` writable.
enum ClStatus cl_evaluate(const struct ClStrategy *strategy,
                          const char *scenario_json,
                          enum ClProtocol protocol,
                          const char *domain,
                          uint32_t client_ip,
                          char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CENSORLAB_H */
