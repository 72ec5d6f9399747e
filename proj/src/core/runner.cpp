#include "core/runner.hpp"

#include <filesystem>
#include <fstream>
#include <memory>

#include "core/evaluate.hpp"
#include "core/hash.hpp"
#include "core/optimizer.hpp"
#include "core/parallel.hpp"

namespace medeval::runner {

using nlohmann::json;

namespace {

std::vector<Question> load_task_file(const RunConfig& cfg, const std::string& path) {
  auto task = parse_task(cfg.task);
  if (!task)
    throw Error(ErrorCode::invalid_argument, "unknown task '" + cfg.task + "' (--task)");
  if (cfg.data_format == "normalized") {
    std::vector<Question> questions = load_normalized(path);
    for (const Question& q : questions)
      if (q.task != *task)
        throw Error(ErrorCode::invalid_argument,
                    "normalized record " + q.id + " is tagged " +
                        task_name(q.task) + ", expected " + cfg.task);
    return questions;
  }
  return load_dataset(path, *task);
}

std::vector<Question> load_questions(const RunConfig& cfg) {
  if (cfg.data.empty())
    throw Error(ErrorCode::invalid_argument, "dataset path is required (--data)");
  std::vector<Question> questions = load_task_file(cfg, cfg.data);
  if (cfg.limit > 0 && static_cast<size_t>(cfg.limit) < questions.size())
    questions.resize(cfg.limit);
  return questions;
}

std::string resolve_template(const RunConfig& cfg) {
  if (cfg.prompt.template_path.empty()) return kDefaultTemplate;
  return load_template_file(cfg.prompt.template_path);
}

// Holds everything a retriever needs alive for the duration of a run.
struct RetrievalBundle {
  Bm25Index index;
  EmbeddingStore embeddings;
  std::unordered_map<std::string, std::vector<double>> query_embeddings;
  std::unique_ptr<HttpEmbedder> embedder;
  std::unique_ptr<ContextRetriever> retriever;
};

std::unique_ptr<RetrievalBundle> make_retrieval(const RunConfig& cfg) {
  const RetrievalRunConfig& r = cfg.retrieval;
  if (r.mode == "off") return nullptr;

  auto bundle = std::make_unique<RetrievalBundle>();
  if (!r.index.empty()) {
    bundle->index = Bm25Index::load(r.index);
  } else {
    IngestOptions ingest{r.min_tokens};
    bundle->index = Bm25Index::build(ingest_corpus(read_file(r.corpus), ingest),
                                     Bm25Params{r.k1, r.b});
  }

  QueryEmbedFn embed;
  if (r.mode == "dense" || r.mode == "hybrid") {
    bundle->embeddings = EmbeddingStore::load_jsonl(r.embeddings);
    if (!r.query_embeddings.empty()) {
      bundle->query_embeddings = load_query_embeddings(r.query_embeddings);
      const auto* table = &bundle->query_embeddings;
      embed = [table](const Question& q) {
        auto it = table->find(q.id);
        if (it == table->end())
          throw Error(ErrorCode::invalid_argument,
                      "no query embedding for question id '" + q.id + "'");
        return it->second;
      };
    } else {
      HttpEmbedderOptions opts;
      opts.api_key_env = cfg.backend.api_key_env;
      bundle->embedder = std::make_unique<HttpEmbedder>(r.embed_base_url,
                                                        r.embed_model, opts);
      const HttpEmbedder* embedder = bundle->embedder.get();
      embed = [embedder](const Question& q) { return embedder->embed(q.stem); };
    }
  }

  if (r.mode == "bm25") {
    bundle->retriever = std::make_unique<Bm25Retriever>(&bundle->index, r.context_k);
  } else if (r.mode == "dense") {
    bundle->retriever = std::make_unique<DenseRetriever>(
        &bundle->index, &bundle->embeddings, embed, r.context_k);
  } else {
    bundle->retriever = std::make_unique<HybridRetriever>(
        &bundle->index, &bundle->embeddings, embed, r.w_sparse, r.w_dense,
        r.context_k);
  }
  return bundle;
}

EnsembleConfig make_ensemble_config(const RunConfig& cfg,
                                    const std::string& template_text) {
  EnsembleConfig base;
  base.prompt.system_instruction = cfg.prompt.system_instruction;
  base.prompt.template_text = template_text;
  base.prompt.cot = cfg.prompt.cot;
  base.prompt.k = cfg.prompt.k;
  base.prompt.retrieval = cfg.retrieval.mode != "off";
  base.n = cfg.sampling.n;
  base.temperature = cfg.sampling.temperature;
  base.max_tokens = cfg.sampling.max_tokens;
  base.seed = cfg.sampling.seed;
  if (cfg.prompt.k > 0) {
    // The exemplar pool is a caller-supplied split (e.g. the task's training
    // file), loaded with the same per-task adapter as --data.
    std::vector<Question> pool = load_task_file(cfg, cfg.prompt.fewshot_data);
    base.exemplars = sample_few_shot(pool, static_cast<size_t>(cfg.prompt.k),
                                     cfg.prompt.fewshot_seed);
  }
  return base;
}

EvalReport evaluate_config(const RunConfig& cfg) {
  validate_run_config(cfg);
  std::vector<Question> questions = load_questions(cfg);
  std::string template_text = resolve_template(cfg);
  auto retrieval = make_retrieval(cfg);
  auto backend = make_backend(cfg.backend, cfg.sampling.seed);

  EvalOptions opts;
  opts.base = make_ensemble_config(cfg, template_text);
  opts.retriever = retrieval ? retrieval->retriever.get() : nullptr;
  opts.parallelism = cfg.parallelism;

  EvalReport report = evaluate_task(questions, opts, *backend);
  report.fingerprint = make_fingerprint(cfg, questions.size(), template_text);
  return report;
}

void require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty())
    throw Error(ErrorCode::invalid_argument, "output directory is required (--out)");
}

void write_fingerprint(const std::string& dir, const json& fingerprint) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/fingerprint.json", fingerprint.dump(2) + "\n");
}

}  // namespace

json index_build(const std::string& corpus_path, const std::string& out_path,
                 const std::string& options_json) {
  IngestOptions ingest;
  Bm25Params params;
  if (!options_json.empty()) {
    json opts;
    try {
      opts = json::parse(options_json);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::invalid_argument,
                  std::string("index options are not valid JSON: ") + e.what());
    }
    if (opts.contains("min_tokens")) ingest.min_tokens = opts["min_tokens"].get<int>();
    if (opts.contains("k1")) params.k1 = opts["k1"].get<double>();
    if (opts.contains("b")) params.b = opts["b"].get<double>();
  }
  Bm25Index index = Bm25Index::build(ingest_corpus(read_file(corpus_path), ingest),
                                     params);
  index.save(out_path);
  return json{{"paragraphs", index.size()},
              {"avgdl", index.avgdl()},
              {"k1", index.params().k1},
              {"b", index.params().b},
              {"index", out_path}};
}

json eval_run(const RunConfig& cfg) {
  require_out_dir(cfg);
  EvalReport report = evaluate_config(cfg);
  write_fingerprint(cfg.out_dir, report.fingerprint);
  write_report(report, cfg.out_dir);
  return json{{"task", task_name(report.task)},
              {"n_questions", report.n_questions},
              {"n_unevaluable", report.n_unevaluable},
              {"accuracy_strict", report.accuracy_strict},
              {"accuracy_evaluable", report.accuracy_evaluable},
              {"usage_approximate", report.usage_approximate},
              {"fingerprint_hash", fingerprint_hash(report.fingerprint)},
              {"report", cfg.out_dir + "/report.json"},
              {"summary", cfg.out_dir + "/summary.csv"}};
}

json ablate_run(const RunConfig& base, const std::string& plan_json_text) {
  require_out_dir(base);
  std::vector<AblationStep> steps = parse_ablation_plan(plan_json_text);
  json base_json = run_config_to_json(base);

  AblationTable table = run_stepwise_ablation(
      steps, base_json, [&](const json& merged) {
        RunConfig cfg = run_config_from_json(merged);
        cfg.out_dir = base.out_dir;  // steps may not redirect output
        return evaluate_config(cfg).accuracy_strict;
      });

  json fingerprint = make_fingerprint(base, 0, resolve_template(base));
  fingerprint["ablation_plan"] = [&] {
    json arr = json::array();
    for (const AblationStep& s : steps)
      arr.push_back({{"name", s.name}, {"delta", s.delta}});
    return arr;
  }();
  write_fingerprint(base.out_dir, fingerprint);
  write_file(base.out_dir + "/ablation.csv", ablation_csv(table));
  json result = ablation_to_json(table);
  result["fingerprint_hash"] = fingerprint_hash(fingerprint);
  write_file(base.out_dir + "/ablation.json", result.dump(2) + "\n");
  result["csv"] = base.out_dir + "/ablation.csv";
  return result;
}

json bins_run(const std::string& report_path, const std::string& by,
              int bin_width, const std::string& out_csv) {
  if (by != "output" && by != "input")
    throw Error(ErrorCode::invalid_argument, "--by must be output|input");
  EvalReport report = load_report(report_path);
  BinnedTable table = (by == "output")
                          ? bin_by_output_tokens(report.records, bin_width)
                          : bin_by_input_tokens(report.records, bin_width);
  std::string fp_hash = fingerprint_hash(
      report.fingerprint.is_null() ? json::object() : report.fingerprint);
  if (!out_csv.empty()) write_file(out_csv, bins_csv(table, fp_hash));
  json summary = bins_to_json(table);
  summary["fingerprint_hash"] = fp_hash;
  if (!out_csv.empty()) summary["csv"] = out_csv;
  return summary;
}

json optimize_run(const RunConfig& cfg) {
  require_out_dir(cfg);
  validate_run_config(cfg);
  if (cfg.optimize.optimizer.base_url.empty())
    throw Error(ErrorCode::invalid_argument,
                "optimizer backend URL is required (--optimizer)");

  std::vector<Question> val_questions = load_questions(cfg);
  std::string template_text = resolve_template(cfg);
  auto retrieval = make_retrieval(cfg);
  auto task_backend = make_backend(cfg.backend, cfg.sampling.seed);
  auto optimizer_backend =
      make_backend(cfg.optimize.optimizer, cfg.optimize.seed);

  json fingerprint = make_fingerprint(cfg, val_questions.size(), template_text);
  fingerprint["optimize"] = {{"iterations", cfg.optimize.iterations},
                             {"minibatch", cfg.optimize.minibatch},
                             {"seed", cfg.optimize.seed},
                             {"optimizer_base_url", cfg.optimize.optimizer.base_url},
                             {"optimizer_model", cfg.optimize.optimizer.model}};
  const std::string fp_hash = fingerprint_hash(fingerprint);

  ScoreFn score = [&](const std::string& instruction,
                      const std::vector<Question>& minibatch) {
    RunConfig scored = cfg;
    scored.prompt.system_instruction = instruction;
    EvalOptions opts;
    opts.base = make_ensemble_config(scored, template_text);
    opts.retriever = retrieval ? retrieval->retriever.get() : nullptr;
    opts.parallelism = cfg.parallelism;
    EvalReport report = evaluate_task(minibatch, opts, *task_backend);

    ScoredRun run;
    run.accuracy = report.accuracy_strict;
    run.fingerprint_hash = fp_hash;
    for (size_t i = 0; i < report.records.size(); ++i) {
      const EnsembleResult& rec = report.records[i];
      if (rec.voted && rec.correct) continue;
      if (run.failures.size() >= static_cast<size_t>(kMaxFailureCases)) break;
      FailureCase f;
      f.stem = minibatch[i].stem;
      f.options = minibatch[i].options;
      f.wrong = rec.voted ? std::string(1, *rec.voted) : "(none)";
      f.reasoning = rec.responses.empty() ? "" : rec.responses.front().text;
      run.failures.push_back(std::move(f));
    }
    return run;
  };

  ProposeOptions prop_opts;
  prop_opts.temperature = cfg.optimize.optimizer_temperature;
  prop_opts.max_tokens = cfg.optimize.optimizer_max_tokens;
  ProposeFn propose = [&](const PromptCandidate& current,
                          const std::vector<FailureCase>& failures) {
    return propose_prompt(*optimizer_backend, current, failures, prop_opts);
  };

  std::filesystem::create_directories(cfg.out_dir);
  const std::string trace_path = cfg.out_dir + "/trace.jsonl";

  TraceHead head;
  if (cfg.optimize.resume && std::filesystem::exists(trace_path))
    head = parse_trace(read_file(trace_path));

  std::ofstream trace_out(trace_path, cfg.optimize.resume ? std::ios::app
                                                          : std::ios::trunc);
  if (!trace_out)
    throw Error(ErrorCode::io_error, "cannot write trace: " + trace_path);
  TraceSink sink = [&](const PromptCandidate& c,
                       const std::vector<FailureCase>& gradient) {
    trace_out << candidate_to_json(c, gradient).dump() << "\n";
    trace_out.flush();
  };

  OptimizeLoopConfig loop;
  loop.iterations = cfg.optimize.iterations;
  loop.minibatch = cfg.optimize.minibatch;
  loop.seed = cfg.optimize.seed;
  loop.initial_template = cfg.prompt.system_instruction;

  OptimizeResult result = optimize_prompt(val_questions, loop, score, propose,
                                          sink, std::move(head));

  write_fingerprint(cfg.out_dir, fingerprint);
  json best = candidate_to_json(result.best, {});
  best.erase("gradient");
  json summary = {{"best", best},
                  {"final_score", result.final_score},
                  {"stop_reason", result.stop_reason},
                  {"candidates", result.trace.size()},
                  {"fingerprint_hash", fp_hash},
                  {"trace", trace_path}};
  write_file(cfg.out_dir + "/best.json", summary.dump(2) + "\n");
  return summary;
}

json report_merge(const std::vector<std::string>& report_paths,
                  const std::string& out_csv) {
  if (report_paths.empty())
    throw Error(ErrorCode::invalid_argument, "no report files given");
  std::string csv = summary_csv_header();
  json rows = json::array();
  for (const std::string& path : report_paths) {
    EvalReport report = load_report(path);
    csv += summary_csv_row(report);
    rows.push_back({{"task", task_name(report.task)},
                    {"n_questions", report.n_questions},
                    {"accuracy_strict", report.accuracy_strict},
                    {"accuracy_evaluable", report.accuracy_evaluable},
                    {"n_unevaluable", report.n_unevaluable}});
  }
  if (!out_csv.empty()) write_file(out_csv, csv);
  json summary = {{"reports", rows.size()}, {"rows", rows}};
  if (!out_csv.empty()) summary["csv"] = out_csv;
  return summary;
}

}  // namespace medeval::runner
