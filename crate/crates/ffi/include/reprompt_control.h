#ifndef REPROMPT_CONTROL_H
#define REPROMPT_CONTROL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcAction {
  RC_ACTION_OFF = 0,
  RC_ACTION_ON = 1,
} RcAction;

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  RC_STATUS_INVALID_INPUT = 3,
  RC_STATUS_INVALID_STATE = 4,
  RC_STATUS_CONFIG = 5,
  RC_STATUS_PARSE = 6,
  RC_STATUS_IO = 7,
  RC_STATUS_LOG_FORMAT = 8,
  RC_STATUS_PANIC = 99,
} RcStatus;

/**
 * Opaque plant-emulator handle.
 */
typedef struct RcPlantServer RcPlantServer;

/**
 * Opaque twin handle.
 */
typedef struct RcTwin RcTwin;

typedef struct RcTwinState {
  double t_heater;
  double t_sensor;
  /**
   * s
   */
  double clock;
} RcTwinState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rc_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void rc_string_free(char *s);

/**
 * Twin with default parameters, at ambient.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RcStatus rc_twin_new_default(struct RcTwin **out);

/**
 * Twin from a JSON parameter object, at ambient.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RcStatus rc_twin_new_from_json(const char *json, struct RcTwin **out);

/**
 * # Safety
 * `twin` must come from `rc_twin_new_*` and not have been freed. Null is ignored.
 */
void rc_twin_free(struct RcTwin *twin);

/**
 * Advances the twin by `dt` seconds at heater duty `duty` (0..=100).
 *
 * # Safety
 * `twin` must be a live handle.
 */
enum RcStatus rc_twin_step(struct RcTwin *twin, double duty, double dt);

/**
 * # Safety
 * `twin` must be a live handle and `out` a valid pointer.
 */
enum RcStatus rc_twin_state(const struct RcTwin *twin, struct RcTwinState *out);

/**
 * # Safety
 * `twin` must be a live handle.
 */
enum RcStatus rc_twin_set_state(struct RcTwin *twin, struct RcTwinState state);

/**
 * Equilibrium temperatures for a constant duty.
 *
 * # Safety
 * `twin` must be a live handle; `t_heater` and `t_sensor` valid pointers.
 */
enum RcStatus rc_twin_steady_state(const struct RcTwin *twin,
                                   double duty,
                                   double *t_heater,
                                   double *t_sensor);

/**
 * Line-protocol plant emulator. `params_json` may be null for defaults.
 *
 * # Safety
 * `params_json` must be null or NUL-terminated; `out` a valid pointer.
 */
enum RcStatus rc_plant_server_new(const char *params_json,
                                  bool lockstep,
                                  struct RcPlantServer **out);

/**
 * # Safety
 * `server` must come from `rc_plant_server_new`. Null is ignored.
 */
void rc_plant_server_free(struct RcPlantServer *server);

/**
 * Handles one protocol line (without newline). The reply, `ERR` included,
 * is written to `reply` and must be freed with `rc_string_free`.
 *
 * # Safety
 * `server` must be a live handle, `line` NUL-terminated, `reply` valid.
 */
enum RcStatus rc_plant_server_command(struct RcPlantServer *server, const char *line, char **reply);

/**
 * Switching rule: OFF above `high`, ON below `low`, otherwise keep `prev`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum RcStatus rc_expected_action(double t_sensor,
                                 enum RcAction prev,
                                 double low,
                                 double high,
                                 enum RcAction *out);

/**
 * Checks a proposal against the switching rule.
 *
 * # Safety
 * `passed` must be a valid pointer.
 */
enum RcStatus rc_validate_rule(enum RcAction proposal,
                               double t_sensor,
                               enum RcAction prev,
                               double low,
                               double high,
                               bool *passed);

/**
 * Extracts the last `ACTION: ON|OFF` line from a model response.
 * Returns `Parse` when there is none.
 *
 * # Safety
 * `response` must be NUL-terminated and `out` a valid pointer.
 */
enum RcStatus rc_parse_action(const char *response, enum RcAction *out);

/**
 * Computes the metrics report of a run log as JSON. Free the result with
 * `rc_string_free`.
 *
 * # Safety
 * `log_path` must be NUL-terminated and `out` a valid pointer.
 */
enum RcStatus rc_report_json(const char *log_path, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPROMPT_CONTROL_H */
