/* medeval — medical multiple-choice QA evaluation pipeline.
 *
 * C API over the core library: opaque handles plus status codes. All
 * functions return MEDEVAL_OK (0) on success; on failure they return a
 * status code and medeval_last_error() carries a human-readable message
 * for the calling thread. Strings returned through out-parameters are
 * heap-allocated and must be released with medeval_string_free().
 *
 * Run configuration is passed as a JSON document; the schema mirrors the
 * CLI flags (see docs/formats.md).
 */

#ifndef MEDEVAL_H
#define MEDEVAL_H

#include <stdint.h>

#if defined(_WIN32)
#define MEDEVAL_API __declspec(dllexport)
#else
#define MEDEVAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum medeval_status {
  MEDEVAL_OK = 0,
  MEDEVAL_E_INVALID_ARGUMENT = 1,
  MEDEVAL_E_IO = 2,
  MEDEVAL_E_MALFORMED_RECORD = 3,
  MEDEVAL_E_DUPLICATE_ID = 4,
  MEDEVAL_E_UNKNOWN_GOLD_LETTER = 5,
  MEDEVAL_E_K_TOO_LARGE = 6,
  MEDEVAL_E_INCONSISTENT_CONFIG = 7,
  MEDEVAL_E_EMPTY_CORPUS = 8,
  MEDEVAL_E_UNKNOWN_PID = 9,
  MEDEVAL_E_ZERO_VECTOR = 10,
  MEDEVAL_E_DIMENSION_MISMATCH = 11,
  MEDEVAL_E_NO_ANSWER_FOUND = 12,
  MEDEVAL_E_LETTER_OUT_OF_RANGE = 13,
  MEDEVAL_E_BACKEND_UNREACHABLE = 14,
  MEDEVAL_E_PROTOCOL_VIOLATION = 15,
  MEDEVAL_E_PROPOSAL_STAGNANT = 16,
  MEDEVAL_E_INTERNAL = 17
} medeval_status;

/* Library version, e.g. "0.1.0". Static storage; do not free. */
MEDEVAL_API const char* medeval_version(void);

/* Message for the last failed call on this thread; static until the next
 * failing call. Never NULL. */
MEDEVAL_API const char* medeval_last_error(void);

MEDEVAL_API void medeval_string_free(char* s);

/* 1 if the status is a usage/configuration problem (CLI exit code 1),
 * 0 for runtime failures (exit code 2). */
MEDEVAL_API int medeval_status_is_usage(medeval_status status);

/* ---- retrieval index ---------------------------------------------------- */

typedef struct medeval_index medeval_index;

/* options_json: {"min_tokens": int, "k1": double, "b": double}, or NULL.
 * Writes a versioned binary index and, on success, stats via json_out. */
MEDEVAL_API medeval_status medeval_index_build(const char* corpus_path,
                                               const char* out_path,
                                               const char* options_json,
                                               char** json_out);

MEDEVAL_API medeval_status medeval_index_open(const char* path,
                                              medeval_index** out);
MEDEVAL_API void medeval_index_close(medeval_index* index);

/* {"paragraphs": N, "avgdl": .., "k1": .., "b": ..} */
MEDEVAL_API medeval_status medeval_index_stats(const medeval_index* index,
                                               char** json_out);

/* BM25 top-k for a free-text query:
 * [{"pid": int, "score": double, "text": str}, ..] */
MEDEVAL_API medeval_status medeval_index_query(const medeval_index* index,
                                               const char* query, int32_t k,
                                               char** hits_json_out);

/* ---- pipeline runs ------------------------------------------------------ */

/* Full task evaluation; writes fingerprint.json, report.json, summary.csv
 * under the config's out_dir and returns a summary document. */
MEDEVAL_API medeval_status medeval_eval_run(const char* config_json,
                                            char** summary_json_out);

/* Stepwise ablation over a plan {"steps":[{"name", "delta"}...]}; deltas are
 * JSON merge patches applied cumulatively to the base config. */
MEDEVAL_API medeval_status medeval_ablate_run(const char* config_json,
                                              const char* plan_json,
                                              char** summary_json_out);

/* Token-length binning over a written report.json; by is "output" or
 * "input". out_csv may be NULL to skip the CSV. */
MEDEVAL_API medeval_status medeval_bins_run(const char* report_path,
                                            const char* by, int32_t bin_width,
                                            const char* out_csv,
                                            char** summary_json_out);

/* Prompt-optimization loop; writes trace.jsonl, best.json, fingerprint.json
 * under the config's out_dir. */
MEDEVAL_API medeval_status medeval_optimize_run(const char* config_json,
                                                char** summary_json_out);

/* Merges report.json files into one summary CSV. */
MEDEVAL_API medeval_status medeval_report_merge(const char* const* report_paths,
                                                int32_t count,
                                                const char* out_csv,
                                                char** summary_json_out);

#ifdef __cplusplus
}
#endif

#endif /* MEDEVAL_H */
