#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "json.hpp"

#include "core/backend.hpp"

namespace medeval {

struct BackendConfig {
  std::string base_url;            // http(s)://... or mock://script.json
  std::string model = "default";
  std::string api_key_env = "MEDEVAL_API_KEY";
  int max_retries = 3;
  int initial_backoff_ms = 500;
  int timeout_s = 120;
};

struct SamplingConfig {
  int n = 5;
  double temperature = 0.7;
  int max_tokens = 1024;
  uint64_t seed = 0;
};

struct PromptRunConfig {
  std::string template_path;       // empty = built-in template
  std::string system_instruction;  // empty by default
  bool cot = false;
  int k = 0;
  std::string fewshot_data;        // exemplar pool, required when k > 0
  uint64_t fewshot_seed = 17;
};

struct RetrievalRunConfig {
  std::string mode = "off";        // off | bm25 | dense | hybrid
  std::string corpus;              // plain-text corpus
  std::string index;               // prebuilt index (alternative to corpus)
  std::string embeddings;          // paragraph vectors, line-JSON
  std::string query_embeddings;    // question vectors keyed by id
  std::string embed_base_url;      // alternative: embedding service
  std::string embed_model = "default";
  double w_sparse = 0.5;
  double w_dense = 0.5;
  int context_k = 1;
  int min_tokens = 1;
  double k1 = 1.2;
  double b = 0.75;
};

struct OptimizeRunConfig {
  int iterations = 10;
  int minibatch = 50;
  uint64_t seed = 0;
  bool resume = false;
  BackendConfig optimizer;
  double optimizer_temperature = 0.7;
  int optimizer_max_tokens = 1024;
};

struct RunConfig {
  std::string task = "medqa";
  std::string data;
  std::string data_format = "canonical";  // canonical | normalized
  BackendConfig backend;
  PromptRunConfig prompt;
  SamplingConfig sampling;
  RetrievalRunConfig retrieval;
  OptimizeRunConfig optimize;
  int parallelism = 8;
  std::string out_dir;
  int limit = 0;  // 0 = all questions
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Flag-style messages ("--corpus") so CLI usage errors can name the
// offending option directly.
void validate_run_config(const RunConfig& cfg);

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, uint64_t seed);

nlohmann::json make_fingerprint(const RunConfig& cfg, size_t n_questions,
                                const std::string& template_text);
std::string fingerprint_hash(const nlohmann::json& fingerprint);

}  // namespace medeval
