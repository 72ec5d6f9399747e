#include "core/run_config.hpp"

#include "core/hash.hpp"

namespace medeval {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  if (!j.is_object())
    throw Error(ErrorCode::invalid_argument, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) { ok = true; break; }
    if (!ok)
      throw Error(ErrorCode::invalid_argument,
                  "unknown config key '" + where + "." + it.key() + "'");
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

BackendConfig backend_from_json(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"base_url", "model", "api_key_env", "max_retries",
                          "initial_backoff_ms", "timeout_s"}, where);
  BackendConfig cfg;
  get_to(j, "base_url", cfg.base_url);
  get_to(j, "model", cfg.model);
  get_to(j, "api_key_env", cfg.api_key_env);
  get_to(j, "max_retries", cfg.max_retries);
  get_to(j, "initial_backoff_ms", cfg.initial_backoff_ms);
  get_to(j, "timeout_s", cfg.timeout_s);
  return cfg;
}

json backend_to_json(const BackendConfig& cfg) {
  return {{"base_url", cfg.base_url},
          {"model", cfg.model},
          {"api_key_env", cfg.api_key_env},
          {"max_retries", cfg.max_retries},
          {"initial_backoff_ms", cfg.initial_backoff_ms},
          {"timeout_s", cfg.timeout_s}};
}

}  // namespace

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["task"] = cfg.task;
  j["data"] = cfg.data;
  j["data_format"] = cfg.data_format;
  j["backend"] = backend_to_json(cfg.backend);
  j["prompt"] = {{"template_path", cfg.prompt.template_path},
                 {"system_instruction", cfg.prompt.system_instruction},
                 {"cot", cfg.prompt.cot},
                 {"k", cfg.prompt.k},
                 {"fewshot_data", cfg.prompt.fewshot_data},
                 {"fewshot_seed", cfg.prompt.fewshot_seed}};
  j["sampling"] = {{"n", cfg.sampling.n},
                   {"temperature", cfg.sampling.temperature},
                   {"max_tokens", cfg.sampling.max_tokens},
                   {"seed", cfg.sampling.seed}};
  j["retrieval"] = {{"mode", cfg.retrieval.mode},
                    {"corpus", cfg.retrieval.corpus},
                    {"index", cfg.retrieval.index},
                    {"embeddings", cfg.retrieval.embeddings},
                    {"query_embeddings", cfg.retrieval.query_embeddings},
                    {"embed_base_url", cfg.retrieval.embed_base_url},
                    {"embed_model", cfg.retrieval.embed_model},
                    {"w_sparse", cfg.retrieval.w_sparse},
                    {"w_dense", cfg.retrieval.w_dense},
                    {"context_k", cfg.retrieval.context_k},
                    {"min_tokens", cfg.retrieval.min_tokens},
                    {"k1", cfg.retrieval.k1},
                    {"b", cfg.retrieval.b}};
  j["optimize"] = {{"iterations", cfg.optimize.iterations},
                   {"minibatch", cfg.optimize.minibatch},
                   {"seed", cfg.optimize.seed},
                   {"resume", cfg.optimize.resume},
                   {"optimizer", backend_to_json(cfg.optimize.optimizer)},
                   {"optimizer_temperature", cfg.optimize.optimizer_temperature},
                   {"optimizer_max_tokens", cfg.optimize.optimizer_max_tokens}};
  j["parallelism"] = cfg.parallelism;
  j["out_dir"] = cfg.out_dir;
  j["limit"] = cfg.limit;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"task", "data", "data_format", "backend", "prompt",
                          "sampling", "retrieval", "optimize", "parallelism",
                          "out_dir", "limit"}, "config");
  RunConfig cfg;
  get_to(j, "task", cfg.task);
  get_to(j, "data", cfg.data);
  get_to(j, "data_format", cfg.data_format);
  if (j.contains("backend")) cfg.backend = backend_from_json(j["backend"], "backend");
  if (j.contains("prompt")) {
    const json& p = j["prompt"];
    reject_unknown_keys(p, {"template_path", "system_instruction", "cot", "k",
                            "fewshot_data", "fewshot_seed"}, "prompt");
    get_to(p, "template_path", cfg.prompt.template_path);
    get_to(p, "system_instruction", cfg.prompt.system_instruction);
    get_to(p, "cot", cfg.prompt.cot);
    get_to(p, "k", cfg.prompt.k);
    get_to(p, "fewshot_data", cfg.prompt.fewshot_data);
    get_to(p, "fewshot_seed", cfg.prompt.fewshot_seed);
  }
  if (j.contains("sampling")) {
    const json& s = j["sampling"];
    reject_unknown_keys(s, {"n", "temperature", "max_tokens", "seed"}, "sampling");
    get_to(s, "n", cfg.sampling.n);
    get_to(s, "temperature", cfg.sampling.temperature);
    get_to(s, "max_tokens", cfg.sampling.max_tokens);
    get_to(s, "seed", cfg.sampling.seed);
  }
  if (j.contains("retrieval")) {
    const json& r = j["retrieval"];
    reject_unknown_keys(r, {"mode", "corpus", "index", "embeddings",
                            "query_embeddings", "embed_base_url", "embed_model",
                            "w_sparse", "w_dense", "context_k", "min_tokens",
                            "k1", "b"}, "retrieval");
    get_to(r, "mode", cfg.retrieval.mode);
    get_to(r, "corpus", cfg.retrieval.corpus);
    get_to(r, "index", cfg.retrieval.index);
    get_to(r, "embeddings", cfg.retrieval.embeddings);
    get_to(r, "query_embeddings", cfg.retrieval.query_embeddings);
    get_to(r, "embed_base_url", cfg.retrieval.embed_base_url);
    get_to(r, "embed_model", cfg.retrieval.embed_model);
    get_to(r, "w_sparse", cfg.retrieval.w_sparse);
    get_to(r, "w_dense", cfg.retrieval.w_dense);
    get_to(r, "context_k", cfg.retrieval.context_k);
    get_to(r, "min_tokens", cfg.retrieval.min_tokens);
    get_to(r, "k1", cfg.retrieval.k1);
    get_to(r, "b", cfg.retrieval.b);
  }
  if (j.contains("optimize")) {
    const json& o = j["optimize"];
    reject_unknown_keys(o, {"iterations", "minibatch", "seed", "resume",
                            "optimizer", "optimizer_temperature",
                            "optimizer_max_tokens"}, "optimize");
    get_to(o, "iterations", cfg.optimize.iterations);
    get_to(o, "minibatch", cfg.optimize.minibatch);
    get_to(o, "seed", cfg.optimize.seed);
    get_to(o, "resume", cfg.optimize.resume);
    if (o.contains("optimizer"))
      cfg.optimize.optimizer = backend_from_json(o["optimizer"], "optimize.optimizer");
    get_to(o, "optimizer_temperature", cfg.optimize.optimizer_temperature);
    get_to(o, "optimizer_max_tokens", cfg.optimize.optimizer_max_tokens);
  }
  get_to(j, "parallelism", cfg.parallelism);
  get_to(j, "out_dir", cfg.out_dir);
  get_to(j, "limit", cfg.limit);
  return cfg;
}

void validate_run_config(const RunConfig& cfg) {
  if (!parse_task(cfg.task))
    throw Error(ErrorCode::invalid_argument, "unknown task '" + cfg.task + "' (--task)");
  if (cfg.backend.base_url.empty())
    throw Error(ErrorCode::invalid_argument, "backend base URL is required (--backend)");
  if (cfg.data_format != "canonical" && cfg.data_format != "normalized")
    throw Error(ErrorCode::invalid_argument,
                "data_format must be canonical|normalized (--format)");
  if (cfg.sampling.n < 1)
    throw Error(ErrorCode::invalid_argument, "n must be >= 1 (--n)");
  if (cfg.sampling.max_tokens < 1)
    throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 1 (--max-tokens)");
  if (cfg.sampling.temperature < 0.0)
    throw Error(ErrorCode::invalid_argument, "temperature must be >= 0 (--temperature)");
  if (cfg.parallelism < 1)
    throw Error(ErrorCode::invalid_argument, "parallelism must be >= 1 (--parallelism)");
  if (cfg.prompt.k < 0)
    throw Error(ErrorCode::invalid_argument, "k must be >= 0 (--k)");
  if (cfg.prompt.k > 0 && cfg.prompt.fewshot_data.empty())
    throw Error(ErrorCode::invalid_argument,
                "--fewshot-data is required when k > 0");
  const std::string& mode = cfg.retrieval.mode;
  if (mode != "off" && mode != "bm25" && mode != "dense" && mode != "hybrid")
    throw Error(ErrorCode::invalid_argument,
                "retrieval mode must be off|bm25|dense|hybrid (--retrieval)");
  if (mode != "off") {
    if (cfg.retrieval.corpus.empty() && cfg.retrieval.index.empty())
      throw Error(ErrorCode::invalid_argument,
                  "retrieval mode '" + mode + "' requires --corpus or --index");
    if (cfg.retrieval.context_k < 1)
      throw Error(ErrorCode::invalid_argument, "context_k must be >= 1 (--context-k)");
  } else {
    if (!cfg.retrieval.corpus.empty() || !cfg.retrieval.index.empty())
      throw Error(ErrorCode::invalid_argument,
                  "--corpus/--index given but retrieval mode is off (--retrieval)");
  }
  if (mode == "dense" || mode == "hybrid") {
    if (cfg.retrieval.embeddings.empty())
      throw Error(ErrorCode::invalid_argument,
                  "retrieval mode '" + mode + "' requires --embeddings");
    if (cfg.retrieval.query_embeddings.empty() &&
        cfg.retrieval.embed_base_url.empty())
      throw Error(ErrorCode::invalid_argument,
                  "retrieval mode '" + mode +
                      "' requires --query-embeddings or --embed-url");
  }
  if (mode == "hybrid") {
    if (cfg.retrieval.w_sparse < 0.0 || cfg.retrieval.w_dense < 0.0 ||
        (cfg.retrieval.w_sparse == 0.0 && cfg.retrieval.w_dense == 0.0))
      throw Error(ErrorCode::invalid_argument,
                  "fusion weights must be >= 0 and not both 0 (--w-sparse/--w-dense)");
  }
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, uint64_t seed) {
  if (cfg.base_url.empty())
    throw Error(ErrorCode::invalid_argument, "backend base URL is empty (--backend)");
  constexpr std::string_view mock_scheme = "mock://";
  if (cfg.base_url.rfind(mock_scheme, 0) == 0) {
    std::string script_path(cfg.base_url.substr(mock_scheme.size()));
    MockScript script;
    if (!script_path.empty()) script = MockScript::load(script_path);
    return std::make_unique<MockBackend>(std::move(script), seed);
  }
  if (cfg.base_url.rfind("http://", 0) == 0 || cfg.base_url.rfind("https://", 0) == 0) {
    HttpBackendOptions opts;
    opts.api_key_env = cfg.api_key_env;
    opts.retry.max_retries = cfg.max_retries;
    opts.retry.initial_backoff_ms = cfg.initial_backoff_ms;
    opts.timeout_s = cfg.timeout_s;
    return std::make_unique<HttpBackend>(cfg.base_url, cfg.model, opts);
  }
  throw Error(ErrorCode::invalid_argument,
              "backend URL must start with http://, https:// or mock:// (--backend)");
}

nlohmann::json make_fingerprint(const RunConfig& cfg, size_t n_questions,
                                const std::string& template_text) {
  json fp;
  fp["tool"] = "medeval";
  fp["version"] = MEDEVAL_VERSION;
  fp["task"] = cfg.task;
  fp["data"] = cfg.data;
  fp["data_format"] = cfg.data_format;
  fp["n_questions"] = n_questions;
  fp["prompt"] = {{"template_hash", to_hex(fnv1a64(template_text))},
                  {"system_instruction", cfg.prompt.system_instruction},
                  {"cot", cfg.prompt.cot},
                  {"k", cfg.prompt.k},
                  {"fewshot_data", cfg.prompt.fewshot_data},
                  {"fewshot_seed", cfg.prompt.fewshot_seed}};
  fp["sampling"] = {{"n", cfg.sampling.n},
                    {"temperature", cfg.sampling.temperature},
                    {"max_tokens", cfg.sampling.max_tokens},
                    {"seed", cfg.sampling.seed}};
  fp["retrieval"] = {{"mode", cfg.retrieval.mode},
                     {"corpus", cfg.retrieval.corpus},
                     {"index", cfg.retrieval.index},
                     {"embeddings", cfg.retrieval.embeddings},
                     {"query_embeddings", cfg.retrieval.query_embeddings},
                     {"embed_base_url", cfg.retrieval.embed_base_url},
                     {"w_sparse", cfg.retrieval.w_sparse},
                     {"w_dense", cfg.retrieval.w_dense},
                     {"context_k", cfg.retrieval.context_k},
                     {"min_tokens", cfg.retrieval.min_tokens},
                     {"k1", cfg.retrieval.k1},
                     {"b", cfg.retrieval.b}};
  fp["backend"] = {{"base_url", cfg.backend.base_url}, {"model", cfg.backend.model}};
  fp["parallelism"] = cfg.parallelism;
  fp["limit"] = cfg.limit;
  return fp;
}

std::string fingerprint_hash(const nlohmann::json& fingerprint) {
  return to_hex(fnv1a64(fingerprint.dump()));
}

}  // namespace medeval
