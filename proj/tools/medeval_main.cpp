// medeval CLI: thin shell over the C API (medeval.h). Builds a run-config
// JSON document from flags (flags > --config file > library defaults) and
// dispatches to the shared library.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "medeval.h"

using nlohmann::json;

namespace {

struct EvalFlags {
  std::string config_file;
  std::string task = "medqa";
  std::string data;
  std::string format = "canonical";
  std::string backend_url;
  std::string model = "default";
  std::string api_key_env = "MEDEVAL_API_KEY";
  int max_retries = 3;
  int timeout_s = 120;
  std::string template_path;
  std::string system_instruction;
  bool cot = false;
  int k = 0;
  std::string fewshot_data;
  uint64_t fewshot_seed = 17;
  int n = 5;
  double temperature = 0.7;
  int max_tokens = 1024;
  uint64_t seed = 0;
  std::string retrieval = "off";
  std::string corpus;
  std::string index;
  std::string embeddings;
  std::string query_embeddings;
  std::string embed_url;
  std::string embed_model = "default";
  double w_sparse = 0.5;
  double w_dense = 0.5;
  int context_k = 1;
  int min_tokens = 1;
  int parallelism = 8;
  int limit = 0;
  std::string out_dir;

  std::map<std::string, CLI::Option*> opts;
};

void add_eval_flags(CLI::App* app, EvalFlags& f) {
  auto& o = f.opts;
  o["config"] = app->add_option("--config", f.config_file,
                                "JSON config file mirroring the run-config schema");
  o["task"] = app->add_option("--task", f.task,
                              "Task: medqa, medmcqa, pubmedqa, mmlu-<subset>");
  o["data"] = app->add_option("--data", f.data, "Dataset file for the task");
  o["format"] = app->add_option("--format", f.format,
                                "Dataset layout: canonical|normalized");
  o["backend"] = app->add_option("--backend", f.backend_url,
                                 "Backend base URL (http://... or mock://script.json)");
  o["model"] = app->add_option("--model", f.model, "Model name sent to the backend");
  o["api-key-env"] = app->add_option("--api-key-env", f.api_key_env,
                                     "Env var holding the API key");
  o["max-retries"] = app->add_option("--max-retries", f.max_retries,
                                     "Transport retries before giving up");
  o["timeout"] = app->add_option("--timeout", f.timeout_s, "HTTP timeout (seconds)");
  o["template"] = app->add_option("--template", f.template_path,
                                  "Prompt template file ({context},{stem},{options})");
  o["system"] = app->add_option("--system", f.system_instruction,
                                "System instruction (default: none)");
  o["cot"] = app->add_flag("--cot,!--no-cot", f.cot,
                           "Chain-of-thought elicitation");
  o["k"] = app->add_option("--k", f.k, "Few-shot exemplar count");
  o["fewshot-data"] = app->add_option("--fewshot-data", f.fewshot_data,
                                      "Exemplar pool file (same layout as --data), required with --k");
  o["fewshot-seed"] = app->add_option("--fewshot-seed", f.fewshot_seed,
                                      "Seed for exemplar sampling");
  o["n"] = app->add_option("--n", f.n, "Ensemble size (samples per question)");
  o["temperature"] = app->add_option("--temperature", f.temperature,
                                     "Sampling temperature");
  o["max-tokens"] = app->add_option("--max-tokens", f.max_tokens,
                                    "Completion token cap");
  o["seed"] = app->add_option("--seed", f.seed, "Run seed (mock backend, records)");
  o["retrieval"] = app->add_option("--retrieval", f.retrieval,
                                   "Context retrieval: off|bm25|dense|hybrid");
  o["corpus"] = app->add_option("--corpus", f.corpus, "Plain-text paragraph corpus");
  o["index"] = app->add_option("--index", f.index, "Prebuilt retrieval index");
  o["embeddings"] = app->add_option("--embeddings", f.embeddings,
                                    "Paragraph embeddings (line-JSON pid/vector)");
  o["query-embeddings"] = app->add_option("--query-embeddings", f.query_embeddings,
                                          "Question embeddings (line-JSON id/vector)");
  o["embed-url"] = app->add_option("--embed-url", f.embed_url,
                                   "Embedding service base URL");
  o["embed-model"] = app->add_option("--embed-model", f.embed_model,
                                     "Embedding model name");
  o["w-sparse"] = app->add_option("--w-sparse", f.w_sparse, "Hybrid BM25 weight");
  o["w-dense"] = app->add_option("--w-dense", f.w_dense, "Hybrid dense weight");
  o["context-k"] = app->add_option("--context-k", f.context_k,
                                   "Paragraphs injected per question");
  o["min-tokens"] = app->add_option("--min-tokens", f.min_tokens,
                                    "Minimum paragraph token count at ingest");
  o["parallelism"] = app->add_option("--parallelism", f.parallelism,
                                     "Concurrent questions in flight");
  o["limit"] = app->add_option("--limit", f.limit, "Evaluate only the first N questions");
  o["out"] = app->add_option("--out", f.out_dir, "Run output directory");
}

bool passed(const EvalFlags& f, const std::string& name) {
  auto it = f.opts.find(name);
  return it != f.opts.end() && it->second->count() > 0;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    json j = json::parse(ss.str());
    if (!j.is_object())
      throw CLI::ValidationError("--config", "config root must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
  }
}

// Flags win over the config file; the file wins over library defaults.
json build_config(const EvalFlags& f) {
  json cfg = f.config_file.empty() ? json::object() : load_config_file(f.config_file);
  auto set = [&](const std::string& flag, const char* key, json value) {
    if (passed(f, flag)) cfg[key] = std::move(value);
  };
  auto set2 = [&](const std::string& flag, const char* sect, const char* key,
                  json value) {
    if (passed(f, flag)) cfg[sect][key] = std::move(value);
  };
  set("task", "task", f.task);
  set("data", "data", f.data);
  set("format", "data_format", f.format);
  set2("backend", "backend", "base_url", f.backend_url);
  set2("model", "backend", "model", f.model);
  set2("api-key-env", "backend", "api_key_env", f.api_key_env);
  set2("max-retries", "backend", "max_retries", f.max_retries);
  set2("timeout", "backend", "timeout_s", f.timeout_s);
  set2("template", "prompt", "template_path", f.template_path);
  set2("system", "prompt", "system_instruction", f.system_instruction);
  set2("cot", "prompt", "cot", f.cot);
  set2("k", "prompt", "k", f.k);
  set2("fewshot-data", "prompt", "fewshot_data", f.fewshot_data);
  set2("fewshot-seed", "prompt", "fewshot_seed", f.fewshot_seed);
  set2("n", "sampling", "n", f.n);
  set2("temperature", "sampling", "temperature", f.temperature);
  set2("max-tokens", "sampling", "max_tokens", f.max_tokens);
  set2("seed", "sampling", "seed", f.seed);
  set2("retrieval", "retrieval", "mode", f.retrieval);
  set2("corpus", "retrieval", "corpus", f.corpus);
  set2("index", "retrieval", "index", f.index);
  set2("embeddings", "retrieval", "embeddings", f.embeddings);
  set2("query-embeddings", "retrieval", "query_embeddings", f.query_embeddings);
  set2("embed-url", "retrieval", "embed_base_url", f.embed_url);
  set2("embed-model", "retrieval", "embed_model", f.embed_model);
  set2("w-sparse", "retrieval", "w_sparse", f.w_sparse);
  set2("w-dense", "retrieval", "w_dense", f.w_dense);
  set2("context-k", "retrieval", "context_k", f.context_k);
  set2("min-tokens", "retrieval", "min_tokens", f.min_tokens);
  set("parallelism", "parallelism", f.parallelism);
  set("limit", "limit", f.limit);
  set("out", "out_dir", f.out_dir);
  return cfg;
}

int finish(medeval_status status, const std::string& synopsis, char* summary) {
  if (status == MEDEVAL_OK) {
    if (summary) {
      std::cout << summary << "\n";
      medeval_string_free(summary);
    }
    return 0;
  }
  std::cerr << "error: " << medeval_last_error() << "\n";
  if (medeval_status_is_usage(status)) {
    std::cerr << "usage: " << synopsis << "\n";
    return 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medeval — multiple-choice medical QA evaluation pipeline"};
  app.set_version_flag("--version", medeval_version());
  app.require_subcommand(1);

  // index build
  CLI::App* index_cmd = app.add_subcommand("index", "Retrieval index tools");
  index_cmd->require_subcommand(1);
  CLI::App* index_build = index_cmd->add_subcommand("build", "Build a BM25 index");
  std::string ib_corpus, ib_out;
  int ib_min_tokens = 1;
  double ib_k1 = 1.2, ib_b = 0.75;
  index_build->add_option("--corpus", ib_corpus, "Plain-text paragraph corpus")
      ->required();
  index_build->add_option("--out", ib_out, "Index output path")->required();
  auto* ib_min_opt = index_build->add_option("--min-tokens", ib_min_tokens,
                                             "Minimum paragraph token count");
  auto* ib_k1_opt = index_build->add_option("--k1", ib_k1, "BM25 k1");
  auto* ib_b_opt = index_build->add_option("--b", ib_b, "BM25 b");

  // eval
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a task");
  EvalFlags eval_flags;
  add_eval_flags(eval_cmd, eval_flags);

  // ablate
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Stepwise component ablation");
  EvalFlags ablate_flags;
  add_eval_flags(ablate_cmd, ablate_flags);
  std::string ablate_plan;
  ablate_cmd->add_option("--plan", ablate_plan, "Ablation plan JSON file")->required();

  // bins
  CLI::App* bins_cmd = app.add_subcommand("bins", "Token-length accuracy binning");
  std::string bins_records, bins_by = "output", bins_out;
  int bins_width = 256;
  bins_cmd->add_option("--records", bins_records, "report.json from an eval run")
      ->required();
  bins_cmd->add_option("--by", bins_by, "Bin by output|input tokens");
  bins_cmd->add_option("--width", bins_width, "Bin width in tokens");
  bins_cmd->add_option("--out", bins_out, "Binned table CSV path");

  // optimize
  CLI::App* optimize_cmd =
      app.add_subcommand("optimize", "Prompt-optimization loop");
  EvalFlags opt_flags;
  add_eval_flags(optimize_cmd, opt_flags);
  std::string opt_url, opt_model = "default";
  int opt_iterations = 10, opt_minibatch = 50, opt_max_tokens = 1024;
  uint64_t opt_seed = 0;
  double opt_temperature = 0.7;
  bool opt_resume = false;
  auto* opt_url_opt = optimize_cmd->add_option("--optimizer", opt_url,
                                               "Optimizer backend base URL");
  auto* opt_model_opt = optimize_cmd->add_option("--optimizer-model", opt_model,
                                                 "Optimizer model name");
  auto* opt_iter_opt = optimize_cmd->add_option("--iterations", opt_iterations,
                                                "Proposal iterations");
  auto* opt_mb_opt = optimize_cmd->add_option("--minibatch", opt_minibatch,
                                              "Validation minibatch size");
  auto* opt_seed_opt = optimize_cmd->add_option("--opt-seed", opt_seed,
                                                "Optimizer loop seed");
  auto* opt_temp_opt = optimize_cmd->add_option("--opt-temperature", opt_temperature,
                                                "Optimizer sampling temperature");
  auto* opt_maxtok_opt = optimize_cmd->add_option("--opt-max-tokens", opt_max_tokens,
                                                  "Optimizer completion cap");
  auto* opt_resume_opt = optimize_cmd->add_flag("--resume", opt_resume,
                                                "Replay an existing trace head");

  // report merge
  CLI::App* report_cmd = app.add_subcommand("report", "Report tools");
  report_cmd->require_subcommand(1);
  CLI::App* report_merge =
      report_cmd->add_subcommand("merge", "Merge reports into one summary CSV");
  std::string rm_out;
  std::vector<std::string> rm_reports;
  report_merge->add_option("--out", rm_out, "Merged CSV path")->required();
  report_merge->add_option("reports", rm_reports, "report.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // any parse failure is a usage error
  }

  if (index_build->parsed()) {
    json opts = json::object();
    if (ib_min_opt->count()) opts["min_tokens"] = ib_min_tokens;
    if (ib_k1_opt->count()) opts["k1"] = ib_k1;
    if (ib_b_opt->count()) opts["b"] = ib_b;
    char* out = nullptr;
    medeval_status st = medeval_index_build(ib_corpus.c_str(), ib_out.c_str(),
                                            opts.dump().c_str(), &out);
    return finish(st, "medeval index build --corpus FILE --out FILE", out);
  }

  if (eval_cmd->parsed()) {
    json cfg = build_config(eval_flags);
    char* out = nullptr;
    medeval_status st = medeval_eval_run(cfg.dump().c_str(), &out);
    return finish(st,
                  "medeval eval --task TASK --data FILE --backend URL --out DIR",
                  out);
  }

  if (ablate_cmd->parsed()) {
    json cfg = build_config(ablate_flags);
    std::ifstream plan_in(ablate_plan);
    if (!plan_in) {
      std::cerr << "error: cannot open --plan file " << ablate_plan << "\n";
      return 1;
    }
    std::ostringstream plan;
    plan << plan_in.rdbuf();
    char* out = nullptr;
    medeval_status st =
        medeval_ablate_run(cfg.dump().c_str(), plan.str().c_str(), &out);
    return finish(st, "medeval ablate --plan FILE --data FILE --backend URL --out DIR",
                  out);
  }

  if (bins_cmd->parsed()) {
    char* out = nullptr;
    medeval_status st =
        medeval_bins_run(bins_records.c_str(), bins_by.c_str(), bins_width,
                         bins_out.empty() ? nullptr : bins_out.c_str(), &out);
    return finish(st, "medeval bins --records report.json --by output|input --out FILE",
                  out);
  }

  if (optimize_cmd->parsed()) {
    json cfg = build_config(opt_flags);
    if (opt_url_opt->count()) cfg["optimize"]["optimizer"]["base_url"] = opt_url;
    if (opt_model_opt->count()) cfg["optimize"]["optimizer"]["model"] = opt_model;
    if (opt_iter_opt->count()) cfg["optimize"]["iterations"] = opt_iterations;
    if (opt_mb_opt->count()) cfg["optimize"]["minibatch"] = opt_minibatch;
    if (opt_seed_opt->count()) cfg["optimize"]["seed"] = opt_seed;
    if (opt_temp_opt->count())
      cfg["optimize"]["optimizer_temperature"] = opt_temperature;
    if (opt_maxtok_opt->count())
      cfg["optimize"]["optimizer_max_tokens"] = opt_max_tokens;
    if (opt_resume_opt->count()) cfg["optimize"]["resume"] = opt_resume;
    char* out = nullptr;
    medeval_status st = medeval_optimize_run(cfg.dump().c_str(), &out);
    return finish(st,
                  "medeval optimize --data FILE --backend URL --optimizer URL --out DIR",
                  out);
  }

  if (report_merge->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(rm_reports.size());
    for (const std::string& p : rm_reports) paths.push_back(p.c_str());
    char* out = nullptr;
    medeval_status st = medeval_report_merge(
        paths.data(), static_cast<int32_t>(paths.size()), rm_out.c_str(), &out);
    return finish(st, "medeval report merge --out FILE report.json...", out);
  }

  std::cerr << app.help() << "\n";
  return 1;
}
