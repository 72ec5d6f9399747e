#include "medeval.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/retrieval.hpp"
#include "core/runner.hpp"
#include "core/text.hpp"

using namespace medeval;

struct medeval_index {
  Bm25Index index;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

medeval_status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return MEDEVAL_E_INVALID_ARGUMENT;
    case ErrorCode::io_error: return MEDEVAL_E_IO;
    case ErrorCode::malformed_record: return MEDEVAL_E_MALFORMED_RECORD;
    case ErrorCode::duplicate_id: return MEDEVAL_E_DUPLICATE_ID;
    case ErrorCode::unknown_gold_letter: return MEDEVAL_E_UNKNOWN_GOLD_LETTER;
    case ErrorCode::k_too_large: return MEDEVAL_E_K_TOO_LARGE;
    case ErrorCode::inconsistent_config: return MEDEVAL_E_INCONSISTENT_CONFIG;
    case ErrorCode::empty_corpus: return MEDEVAL_E_EMPTY_CORPUS;
    case ErrorCode::unknown_pid: return MEDEVAL_E_UNKNOWN_PID;
    case ErrorCode::zero_vector: return MEDEVAL_E_ZERO_VECTOR;
    case ErrorCode::dimension_mismatch: return MEDEVAL_E_DIMENSION_MISMATCH;
    case ErrorCode::no_answer_found: return MEDEVAL_E_NO_ANSWER_FOUND;
    case ErrorCode::letter_out_of_range: return MEDEVAL_E_LETTER_OUT_OF_RANGE;
    case ErrorCode::backend_unreachable: return MEDEVAL_E_BACKEND_UNREACHABLE;
    case ErrorCode::protocol_violation: return MEDEVAL_E_PROTOCOL_VIOLATION;
    case ErrorCode::proposal_stagnant: return MEDEVAL_E_PROPOSAL_STAGNANT;
  }
  return MEDEVAL_E_INTERNAL;
}

// Runs fn, routing exceptions into status codes + last-error.
template <typename Fn>
medeval_status guarded(Fn&& fn) {
  try {
    fn();
    return MEDEVAL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MEDEVAL_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MEDEVAL_E_INTERNAL;
  }
}

medeval_status require(const void* p, const char* name) {
  if (p) return MEDEVAL_OK;
  g_last_error = std::string(name) + " must not be NULL";
  return MEDEVAL_E_INVALID_ARGUMENT;
}

RunConfig parse_config(const char* config_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument,
                std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace

extern "C" {

const char* medeval_version(void) { return MEDEVAL_VERSION; }

const char* medeval_last_error(void) { return g_last_error.c_str(); }

void medeval_string_free(char* s) { std::free(s); }

int medeval_status_is_usage(medeval_status status) {
  switch (status) {
    case MEDEVAL_E_INVALID_ARGUMENT:
    case MEDEVAL_E_INCONSISTENT_CONFIG:
    case MEDEVAL_E_K_TOO_LARGE:
      return 1;
    default:
      return 0;
  }
}

medeval_status medeval_index_build(const char* corpus_path, const char* out_path,
                                   const char* options_json, char** json_out) {
  if (auto s = require(corpus_path, "corpus_path")) return s;
  if (auto s = require(out_path, "out_path")) return s;
  return guarded([&] {
    nlohmann::json stats = runner::index_build(
        corpus_path, out_path, options_json ? options_json : "");
    if (json_out) *json_out = dup_string(stats.dump(2));
  });
}

medeval_status medeval_index_open(const char* path, medeval_index** out) {
  if (auto s = require(path, "path")) return s;
  if (auto s = require(out, "out")) return s;
  return guarded([&] {
    auto handle = new medeval_index{Bm25Index::load(path)};
    *out = handle;
  });
}

void medeval_index_close(medeval_index* index) { delete index; }

medeval_status medeval_index_stats(const medeval_index* index, char** json_out) {
  if (auto s = require(index, "index")) return s;
  if (auto s = require(json_out, "json_out")) return s;
  return guarded([&] {
    nlohmann::json stats{{"paragraphs", index->index.size()},
                         {"avgdl", index->index.avgdl()},
                         {"k1", index->index.params().k1},
                         {"b", index->index.params().b}};
    *json_out = dup_string(stats.dump(2));
  });
}

medeval_status medeval_index_query(const medeval_index* index, const char* query,
                                   int32_t k, char** hits_json_out) {
  if (auto s = require(index, "index")) return s;
  if (auto s = require(query, "query")) return s;
  if (auto s = require(hits_json_out, "hits_json_out")) return s;
  return guarded([&] {
    if (k < 1) throw Error(ErrorCode::invalid_argument, "k must be >= 1");
    auto hits = index->index.top_k(tokenize(query), static_cast<size_t>(k));
    nlohmann::json arr = nlohmann::json::array();
    for (const RetrievalHit& h : hits) {
      arr.push_back({{"pid", h.pid},
                     {"score", h.score},
                     {"text", index->index.paragraphs()[h.pid].text}});
    }
    *hits_json_out = dup_string(arr.dump(2));
  });
}

medeval_status medeval_eval_run(const char* config_json, char** summary_json_out) {
  if (auto s = require(config_json, "config_json")) return s;
  return guarded([&] {
    nlohmann::json summary = runner::eval_run(parse_config(config_json));
    if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
  });
}

medeval_status medeval_ablate_run(const char* config_json, const char* plan_json,
                                  char** summary_json_out) {
  if (auto s = require(config_json, "config_json")) return s;
  if (auto s = require(plan_json, "plan_json")) return s;
  return guarded([&] {
    nlohmann::json summary =
        runner::ablate_run(parse_config(config_json), plan_json);
    if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
  });
}

medeval_status medeval_bins_run(const char* report_path, const char* by,
                                int32_t bin_width, const char* out_csv,
                                char** summary_json_out) {
  if (auto s = require(report_path, "report_path")) return s;
  if (auto s = require(by, "by")) return s;
  return guarded([&] {
    nlohmann::json summary =
        runner::bins_run(report_path, by, bin_width, out_csv ? out_csv : "");
    if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
  });
}

medeval_status medeval_optimize_run(const char* config_json,
                                    char** summary_json_out) {
  if (auto s = require(config_json, "config_json")) return s;
  return guarded([&] {
    nlohmann::json summary = runner::optimize_run(parse_config(config_json));
    if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
  });
}

medeval_status medeval_report_merge(const char* const* report_paths,
                                    int32_t count, const char* out_csv,
                                    char** summary_json_out) {
  if (auto s = require(report_paths, "report_paths")) return s;
  return guarded([&] {
    std::vector<std::string> paths;
    for (int32_t i = 0; i < count; ++i) {
      if (!report_paths[i])
        throw Error(ErrorCode::invalid_argument, "report path is NULL");
      paths.emplace_back(report_paths[i]);
    }
    nlohmann::json summary = runner::report_merge(paths, out_csv ? out_csv : "");
    if (summary_json_out) *summary_json_out = dup_string(summary.dump(2));
  });
}

}  // extern "C"
