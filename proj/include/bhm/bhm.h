/* SPDX-License-Identifier: Apache-2.0 */
#ifndef BHM_H
#define BHM_H

/* C interface of the battery health monitoring toolkit.
 *
 * Conventions:
 *   - Every function returns a bhm_status; BHM_OK (0) on success.
 *   - On failure, bhm_last_error() returns a thread-local message that
 *     stays valid until the next failing call on the same thread.
 *   - Objects are opaque handles created/destroyed by the matching
 *     _free function. Handles are not thread-safe to mutate concurrently,
 *     but distinct handles may be used from distinct threads freely.
 *   - Structured results are UTF-8 JSON strings allocated by the library;
 *     release them with bhm_string_free.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(BHM_BUILD_SHARED)
#    define BHM_API __declspec(dllexport)
#  else
#    define BHM_API __declspec(dllimport)
#  endif
#else
#  if defined(BHM_BUILD_SHARED)
#    define BHM_API __attribute__((visibility("default")))
#  else
#    define BHM_API
#  endif
#endif

#define BHM_VERSION_MAJOR 1
#define BHM_VERSION_MINOR 0
#define BHM_VERSION_PATCH 0

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bhm_status {
  BHM_OK = 0,
  BHM_E_ARGUMENT = 1,
  BHM_E_FORMAT = 2,
  BHM_E_DATA = 3,
  BHM_E_COVERAGE = 4,
  BHM_E_DEGENERATE = 5,
  BHM_E_INSUFFICIENT = 6,
  BHM_E_UNDEFINED_ENTROPY = 7,
  BHM_E_NUMERICAL = 8,
  BHM_E_CONVERSION = 9,
  BHM_E_EVALUATION = 10,
  BHM_E_SEARCH = 11,
  BHM_E_CONFIG = 12,
  BHM_E_IO = 13,
  BHM_E_INTERNAL = 14
} bhm_status;

BHM_API const char* bhm_version(void);

/* Thread-local message for the most recent failure on this thread; never
 * NULL (empty string when no failure has occurred). */
BHM_API const char* bhm_last_error(void);

BHM_API void bhm_string_free(char* s);

/* ---- cell histories ---------------------------------------------------- */

typedef struct bhm_history bhm_history;

/* options_json (nullable): {"cell_id": str, "nominal_capacity_ah": num,
 * "cc_charge_current_a": num, "upper_cutoff_v": num, "lower_cutoff_v": num,
 * "flip_current_sign": bool} — all fields optional. */
BHM_API bhm_status bhm_history_load_csv(const char* cycles_csv_path,
                                        const char* capacity_csv_path, /* nullable */
                                        const char* options_json,      /* nullable */
                                        bhm_history** out);
BHM_API bhm_status bhm_history_load_json(const char* path, bhm_history** out);
BHM_API bhm_status bhm_history_from_json(const char* json_text, bhm_history** out);
/* params_json: synthetic cell parameters (see docs/config.md). */
BHM_API bhm_status bhm_history_synthesize(const char* params_json, bhm_history** out);

BHM_API bhm_status bhm_history_to_json(const bhm_history* h, char** out_json);
BHM_API bhm_status bhm_history_save(const bhm_history* h, const char* path);
BHM_API bhm_status bhm_history_save_csv(const bhm_history* h,
                                        const char* cycles_csv_path,
                                        const char* capacity_csv_path /* nullable */);
BHM_API bhm_status bhm_history_cycle_count(const bhm_history* h, size_t* out);
BHM_API void bhm_history_free(bhm_history* h);

/* ---- health-indicator registry ------------------------------------------ */

typedef struct bhm_registry bhm_registry;

BHM_API bhm_status bhm_registry_create(bhm_registry** out);
BHM_API bhm_status bhm_registry_catalog(const bhm_registry* r, char** out_json);
/* ids_json: ["VRE_SOC", ...] (>= 2 SOC-based ids). */
BHM_API bhm_status bhm_registry_fuse(bhm_registry* r, const char* fusion_id,
                                     const char* ids_json);
/* interval_json (nullable): {"reference": "voltage_v", "lower": x, "upper": y}.
 * Result: {"hi_id": ..., "width": w, "per_cycle": [[...]|null, ...],
 * "soh_pct": [...]} aligned with cycles. */
BHM_API bhm_status bhm_registry_extract(const bhm_registry* r, const bhm_history* h,
                                        const char* hi_id, const char* interval_json,
                                        char** out_json);
BHM_API void bhm_registry_free(bhm_registry* r);

/* ---- fleet sessions ------------------------------------------------------ */

typedef struct bhm_sessions bhm_sessions;

BHM_API bhm_status bhm_sessions_load_csv(const char* path, bhm_sessions** out);
BHM_API bhm_status bhm_sessions_generate(const char* params_json, bhm_sessions** out);
BHM_API bhm_status bhm_sessions_count(const bhm_sessions* s, size_t* out);
/* Ingest quarantine report: {"quarantined": [{"line": n, "reason": ...}]} */
BHM_API bhm_status bhm_sessions_quarantine(const bhm_sessions* s, char** out_json);
BHM_API bhm_status bhm_sessions_histogram(const bhm_sessions* s, char** out_json);
/* requirement_json: {"scenario": "charge"|"discharge", "lo": x, "hi": y,
 * "rule": "full_interval" | {"any_subwindow": width}} */
BHM_API bhm_status bhm_sessions_probability(const bhm_sessions* s,
                                            const char* requirement_json,
                                            char** out_json);
/* requirements_json: array of requirement objects (fused coverage). */
BHM_API bhm_status bhm_sessions_fusion_probability(const bhm_sessions* s,
                                                   const char* requirements_json,
                                                   char** out_json);
BHM_API void bhm_sessions_free(bhm_sessions* s);

/* ---- regression models --------------------------------------------------- */

typedef struct bhm_model bhm_model;

/* x: column-major samples (input_dim * m doubles, sample j at x + j*input_dim). */
BHM_API bhm_status bhm_train_elm(const double* x, size_t input_dim, size_t m,
                                 const double* y, size_t hidden_dim, double ridge,
                                 uint64_t seed, bhm_model** out);
/* woa_json (nullable): {"population": 20, "max_iterations": 30}. */
BHM_API bhm_status bhm_train_woa_elm(const double* x, size_t input_dim, size_t m,
                                     const double* y, size_t hidden_dim, double ridge,
                                     uint64_t seed, const char* woa_json,
                                     bhm_model** out);
BHM_API bhm_status bhm_model_predict(const bhm_model* model, const double* x,
                                     size_t input_dim, size_t k, double* out_y);
BHM_API bhm_status bhm_model_to_json(const bhm_model* model, char** out_json);
BHM_API bhm_status bhm_model_from_json(const char* json_text, bhm_model** out);
BHM_API void bhm_model_free(bhm_model* model);

typedef double (*bhm_fitness_fn)(const double* x, size_t dim, void* user_data);

/* Generic minimization. bounds_lo/bounds_hi: dim doubles each. out_best:
 * dim doubles. out_trace (nullable): max_iterations doubles (best-so-far
 * fitness per iteration). */
BHM_API bhm_status bhm_woa_minimize(bhm_fitness_fn fitness, void* user_data,
                                    size_t dim, const double* bounds_lo,
                                    const double* bounds_hi, size_t population,
                                    size_t max_iterations, uint64_t seed,
                                    double* out_best, double* out_best_fitness,
                                    double* out_trace);

/* ---- pipeline ------------------------------------------------------------ */

/* Runs one CLI verb (generate, extract, evaluate, optimize-intervals,
 * heatmap, screen, probability, fuse, report) against a JSON config file.
 * out_dir (nullable) overrides the config's output directory, jobs > 0
 * overrides worker count, has_seed != 0 makes `seed` replace the engine
 * base seed. Environment overrides BHM_OUT_DIR / BHM_JOBS apply beneath
 * these. *out_exit_code is the process-style exit code (0 = no failures);
 * the return value only reports whether the run itself could be executed. */
BHM_API bhm_status bhm_run(const char* verb, const char* config_path,
                           const char* out_dir, int jobs, int has_seed,
                           uint64_t seed, int* out_exit_code);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BHM_H */
