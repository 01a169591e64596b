#ifndef STREAMSCALE_H
#define STREAMSCALE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SsStatus {
  SS_STATUS_OK = 0,
  SS_STATUS_NULL_POINTER = 1,
  SS_STATUS_INVALID_ARGUMENT = 2,
  SS_STATUS_CONFIG_ERROR = 3,
  SS_STATUS_SIMULATION_ERROR = 4,
  SS_STATUS_IO_ERROR = 5,
  SS_STATUS_PANIC = 6,
} SsStatus;

typedef enum SsPolicy {
  SS_POLICY_NONE = 0,
  SS_POLICY_DS2 = 1,
  SS_POLICY_JUSTIN = 2,
} SsPolicy;

typedef struct SsRun SsRun;

/**
 * A scenario together with the run options it was loaded with.
 */
typedef struct SsScenario SsScenario;

typedef struct SsSummary {
  uint32_t reconfigurations;
  uint32_t final_cores;
  double final_memory_mb;
  double achieved_rate;
  double target_rate;
  double convergence_time_s;
  uint32_t tm_count;
  /**
   * True when a reconfiguration failed and ended the run early.
   */
  bool failed;
} SsSummary;

typedef struct SsTracePoint {
  double time_s;
  /**
   * Index into the scenario's operators, see [`ss_scenario_operator_name`].
   */
  uint32_t operator_index;
  uint32_t parallelism;
  /**
   * -1 when the operator has no managed memory.
   */
  int32_t mem_level;
  double offered_rate;
  double processed_rate;
  double busyness;
  /**
   * NaN for operators without state.
   */
  double cache_hit_rate;
  /**
   * NaN for operators without state.
   */
  double access_latency_s;
  bool backpressured;
  uint32_t total_cores;
  double total_memory_mb;
} SsTracePoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * call into this library from the same thread.
 */
const char *ss_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ss_version(void);

/**
 * Loads a built-in scenario with default run options. A non-positive
 * `target_rate` keeps the scenario's default rate.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SsStatus ss_scenario_builtin(const char *name, double target_rate, struct SsScenario **out);

/**
 * Loads a scenario and run options from a JSON run configuration, the
 * same document the command-line tool accepts.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SsStatus ss_scenario_from_json(const char *json, struct SsScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from this library not yet freed.
 */
void ss_scenario_free(struct SsScenario *scenario);

/**
 * Number of operators, or 0 for a null handle.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t ss_scenario_operator_count(const struct SsScenario *scenario);

/**
 * Operator id at `index`, owned by the scenario; null when out of range.
 *
 * # Safety
 * `scenario` must be null or a live handle.
 */
const char *ss_scenario_operator_name(const struct SsScenario *scenario, size_t index);

/**
 * Sets the seed used by subsequent runs of this scenario.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum SsStatus ss_scenario_set_seed(struct SsScenario *scenario, uint64_t seed);

/**
 * Simulates the scenario under `policy`. A run that stopped on a placement
 * failure still succeeds; its summary has `failed` set.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum SsStatus ss_run(const struct SsScenario *scenario, enum SsPolicy policy, struct SsRun **out);

/**
 * # Safety
 * `run` must be null or a handle from [`ss_run`] not yet freed.
 */
void ss_run_free(struct SsRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum SsStatus ss_run_summary(const struct SsRun *run, struct SsSummary *out);

/**
 * Number of trace points, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t ss_run_trace_len(const struct SsRun *run);

/**
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum SsStatus ss_run_trace_point(const struct SsRun *run, size_t index, struct SsTracePoint *out);

/**
 * Writes the trace as CSV to `path`.
 *
 * # Safety
 * `run` must be a live handle and `path` a valid NUL-terminated string.
 */
enum SsStatus ss_run_write_trace(const struct SsRun *run, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STREAMSCALE_H */
