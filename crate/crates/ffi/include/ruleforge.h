#ifndef RULEFORGE_H
#define RULEFORGE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_ARGUMENT = 1,
  RF_STATUS_INVALID_UTF8 = 2,
  RF_STATUS_PARSE = 3,
  RF_STATUS_FORMAT = 4,
  RF_STATUS_SEMANTICS = 5,
  RF_STATUS_REJECTED = 6,
  RF_STATUS_PANIC = 7,
} RfStatus;

/**
 * Operational design domain.
 */
typedef struct RfOdd RfOdd;

/**
 * Parsed rule.
 */
typedef struct RfRule RfRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null.
 * The pointer stays valid until the next call on this thread.
 */
const char *rf_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void rf_string_free(char *s);

/**
 * # Safety
 * `source` must be a NUL-terminated string; `out_rule` must be writable.
 */
enum RfStatus rf_rule_parse(const char *source, struct RfRule **out_rule);

/**
 * # Safety
 * `rule` must come from [`rf_rule_parse`] or be null.
 */
void rf_rule_free(struct RfRule *rule);

/**
 * Canonical text of `rule`; free with [`rf_string_free`].
 *
 * # Safety
 * `rule` must be a live handle; `out_text` must be writable.
 */
enum RfStatus rf_rule_print(const struct RfRule *rule, char **out_text);

/**
 * Evaluates `rule` at the point given by parallel `names`/`values` arrays.
 * A negative `eps_eq` selects the default tolerance.
 *
 * # Safety
 * `names` and `values` must each point to `len` readable elements.
 */
enum RfStatus rf_rule_evaluate(const struct RfRule *rule,
                               const char *const *names,
                               const double *values,
                               size_t len,
                               double eps_eq,
                               bool *out_holds);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out_odd` must be writable.
 */
enum RfStatus rf_odd_from_json(const char *json, struct RfOdd **out_odd);

/**
 * # Safety
 * `odd` must come from [`rf_odd_from_json`] or be null.
 */
void rf_odd_free(struct RfOdd *odd);

/**
 * Grammar compliance of raw rule text, in [0, 1].
 *
 * # Safety
 * `source` must be a NUL-terminated string; `out_gc` must be writable.
 */
enum RfStatus rf_grammar_compliance(const char *source, double *out_gc);

/**
 * Semantic validity of `rule` against `odd`, in [0, 1].
 *
 * # Safety
 * `rule` and `odd` must be live handles; `out_sv` must be writable.
 */
enum RfStatus rf_semantic_validity(const struct RfRule *rule,
                                   const struct RfOdd *odd,
                                   double *out_sv);

/**
 * Runs the refinement loop described by a JSON request and returns the
 * outcome as JSON. Request fields: `odd`, `rules` and `oracle` as JSON
 * objects, `dataset_csv` as text, and optional `rule_id`,
 * `mock_responses`, `max_attempts`, `eps_eq`, `seed`. Without
 * `mock_responses` the local deterministic generator is used.
 *
 * # Safety
 * `request` must be a NUL-terminated string; `out_json` must be writable.
 */
enum RfStatus rf_refine_json(const char *request, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RULEFORGE_H */
