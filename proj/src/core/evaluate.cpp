#include "core/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>

#include "core/csv.hpp"
#include "core/hash.hpp"
#include "core/parallel.hpp"

namespace medeval {

using nlohmann::json;

namespace {

std::string format_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void finalize_metrics(EvalReport& report) {
  int n_correct = 0;
  int n_unevaluable = 0;
  bool approx = false;
  for (const EnsembleResult& r : report.records) {
    if (!r.voted) ++n_unevaluable;
    else if (r.correct) ++n_correct;
    for (const ModelResponse& resp : r.responses)
      approx = approx || resp.usage_approximate;
  }
  report.n_questions = static_cast<int>(report.records.size());
  report.n_unevaluable = n_unevaluable;
  report.usage_approximate = approx;
  const int evaluable = report.n_questions - n_unevaluable;
  report.accuracy_strict =
      report.n_questions ? static_cast<double>(n_correct) / report.n_questions : 0.0;
  report.accuracy_evaluable =
      evaluable ? static_cast<double>(n_correct) / evaluable : 0.0;
}

}  // namespace

EvalReport evaluate_task(const std::vector<Question>& questions,
                         const EvalOptions& opts, Backend& backend) {
  if (questions.empty())
    throw Error(ErrorCode::invalid_argument, "no questions to evaluate");

  EvalReport report;
  report.task = questions.front().task;
  report.records.resize(questions.size());

  parallel_for(questions.size(), opts.parallelism, [&](size_t i) {
    const Question& q = questions[i];
    try {
      EnsembleConfig cfg = opts.base;
      if (opts.retriever) {
        cfg.context = opts.retriever->retrieve(q);
        cfg.prompt.retrieval = true;
      }
      report.records[i] = run_ensemble(q, cfg, backend);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::backend_unreachable) throw;  // aborts the task
      EnsembleResult r;
      r.qid = q.id;
      r.task = q.task;
      r.gold = q.gold;
      r.error = std::string(error_code_name(e.code())) + ": " + e.what();
      report.records[i] = std::move(r);
    }
  });

  finalize_metrics(report);
  return report;
}

json report_to_json(const EvalReport& report) {
  json j;
  j["task"] = task_name(report.task);
  j["n_questions"] = report.n_questions;
  j["n_unevaluable"] = report.n_unevaluable;
  j["accuracy_strict"] = report.accuracy_strict;
  j["accuracy_evaluable"] = report.accuracy_evaluable;
  j["usage_approximate"] = report.usage_approximate;
  j["fingerprint"] = report.fingerprint.is_null() ? json::object() : report.fingerprint;
  j["fingerprint_hash"] = to_hex(fnv1a64(j["fingerprint"].dump()));
  json records = json::array();
  for (const EnsembleResult& r : report.records) {
    json rec;
    rec["qid"] = r.qid;
    rec["task"] = task_name(r.task);
    rec["gold"] = std::string(1, r.gold);
    if (r.voted) rec["voted"] = std::string(1, *r.voted);
    else rec["voted"] = nullptr;
    rec["correct"] = r.correct;
    rec["error"] = r.error;
    json responses = json::array();
    for (const ModelResponse& resp : r.responses) {
      responses.push_back({{"text", resp.text},
                           {"prompt_tokens", resp.prompt_tokens},
                           {"completion_tokens", resp.completion_tokens},
                           {"finish", finish_reason_name(resp.finish)},
                           {"usage_approximate", resp.usage_approximate}});
    }
    rec["responses"] = responses;
    json extracted = json::array();
    for (const ExtractOutcome& e : r.extracted) {
      if (e.letter) extracted.push_back({{"letter", std::string(1, *e.letter)}});
      else extracted.push_back({{"failure", e.failure}});
    }
    rec["extracted"] = extracted;
    records.push_back(std::move(rec));
  }
  j["records"] = records;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport report;
  auto task = parse_task(j.at("task").get<std::string>());
  if (!task) throw Error(ErrorCode::malformed_record, "report has unknown task tag");
  report.task = *task;
  report.n_questions = j.at("n_questions").get<int>();
  report.n_unevaluable = j.at("n_unevaluable").get<int>();
  report.accuracy_strict = j.at("accuracy_strict").get<double>();
  report.accuracy_evaluable = j.at("accuracy_evaluable").get<double>();
  report.usage_approximate = j.value("usage_approximate", false);
  report.fingerprint = j.value("fingerprint", json::object());
  for (const json& rec : j.at("records")) {
    EnsembleResult r;
    r.qid = rec.at("qid").get<std::string>();
    auto rec_task = parse_task(rec.at("task").get<std::string>());
    if (!rec_task)
      throw Error(ErrorCode::malformed_record, "record has unknown task tag");
    r.task = *rec_task;
    r.gold = rec.at("gold").get<std::string>().at(0);
    if (rec.contains("voted") && rec["voted"].is_string())
      r.voted = rec["voted"].get<std::string>().at(0);
    r.correct = rec.value("correct", false);
    r.error = rec.value("error", "");
    for (const json& resp : rec.at("responses")) {
      ModelResponse m;
      m.text = resp.at("text").get<std::string>();
      m.prompt_tokens = resp.at("prompt_tokens").get<int>();
      m.completion_tokens = resp.at("completion_tokens").get<int>();
      m.finish = parse_finish_reason(resp.at("finish").get<std::string>());
      m.usage_approximate = resp.value("usage_approximate", false);
      r.responses.push_back(std::move(m));
    }
    for (const json& e : rec.at("extracted")) {
      ExtractOutcome o;
      if (e.contains("letter")) o.letter = e["letter"].get<std::string>().at(0);
      else o.failure = e.value("failure", "");
      r.extracted.push_back(std::move(o));
    }
    report.records.push_back(std::move(r));
  }
  return report;
}

std::string summary_csv_header() {
  return "task,n,accuracy_strict,accuracy_evaluable,n_unevaluable,fingerprint\n";
}

std::string summary_csv_row(const EvalReport& report) {
  json fp = report.fingerprint.is_null() ? json::object() : report.fingerprint;
  std::string row;
  row += csv_escape(task_name(report.task));
  row += ",";
  row += std::to_string(report.n_questions);
  row += ",";
  row += format_accuracy(report.accuracy_strict);
  row += ",";
  row += format_accuracy(report.accuracy_evaluable);
  row += ",";
  row += std::to_string(report.n_unevaluable);
  row += ",";
  row += to_hex(fnv1a64(fp.dump()));
  row += "\n";
  return row;
}

void write_report(const EvalReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/report.json", report_to_json(report).dump(2) + "\n");
  write_file(dir + "/summary.csv", summary_csv_header() + summary_csv_row(report));
}

EvalReport load_report(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_record,
                path + ": not a valid report: " + e.what());
  }
  try {
    return report_from_json(j);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::malformed_record,
                path + ": not a valid report: " + e.what());
  }
}

AblationTable run_stepwise_ablation(
    const std::vector<AblationStep>& steps, const json& base_config,
    const std::function<double(const json&)>& eval_accuracy) {
  if (steps.empty())
    throw Error(ErrorCode::invalid_argument, "ablation plan has no steps");
  AblationTable table;
  json cumulative = base_config;
  double prev = 0.0;
  for (size_t i = 0; i < steps.size(); ++i) {
    cumulative.merge_patch(steps[i].delta);
    AblationRow row;
    row.name = steps[i].name;
    row.delta = steps[i].delta;
    row.accuracy = eval_accuracy(cumulative);
    row.delta_vs_prev = (i == 0) ? 0.0 : row.accuracy - prev;
    prev = row.accuracy;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<AblationStep> parse_ablation_plan(const std::string& plan_json_text) {
  json j;
  try {
    j = json::parse(plan_json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_record,
                std::string("ablation plan is not valid JSON: ") + e.what());
  }
  const json* steps = nullptr;
  if (j.is_array()) steps = &j;
  else if (j.is_object() && j.contains("steps") && j["steps"].is_array())
    steps = &j["steps"];
  else
    throw Error(ErrorCode::malformed_record,
                "ablation plan must be a JSON array or {\"steps\": [..]}");
  std::vector<AblationStep> out;
  for (const json& s : *steps) {
    AblationStep step;
    if (!s.is_object() || !s.contains("name") || !s["name"].is_string())
      throw Error(ErrorCode::malformed_record, "ablation step needs a 'name'");
    step.name = s["name"].get<std::string>();
    step.delta = s.value("delta", json::object());
    out.push_back(std::move(step));
  }
  if (out.empty())
    throw Error(ErrorCode::malformed_record, "ablation plan has no steps");
  return out;
}

std::string ablation_csv(const AblationTable& table) {
  std::string out = "step,name,accuracy,delta_vs_prev,config_delta\n";
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const AblationRow& row = table.rows[i];
    out += std::to_string(i + 1);
    out += ",";
    out += csv_escape(row.name);
    out += ",";
    out += format_accuracy(row.accuracy);
    out += ",";
    out += format_accuracy(row.delta_vs_prev);
    out += ",";
    out += csv_escape(row.delta.dump());
    out += "\n";
  }
  return out;
}

json ablation_to_json(const AblationTable& table) {
  json rows = json::array();
  for (const AblationRow& row : table.rows) {
    rows.push_back({{"name", row.name},
                    {"delta", row.delta},
                    {"accuracy", row.accuracy},
                    {"delta_vs_prev", row.delta_vs_prev}});
  }
  return json{{"steps", rows}};
}

namespace {

BinnedTable bin_records(const std::vector<EnsembleResult>& records,
                        int bin_width, bool by_output) {
  if (bin_width < 1)
    throw Error(ErrorCode::invalid_argument, "bin width must be >= 1");
  BinnedTable table;
  table.by = by_output ? "output" : "input";
  table.width = bin_width;

  std::map<int, std::pair<int, int>> bins;  // bin index -> (n, n_correct)
  std::optional<TaskTag> seen_task;
  for (const EnsembleResult& rec : records) {
    if (!seen_task) seen_task = rec.task;
    else if (*seen_task != rec.task) table.mixed_tasks = true;
    for (size_t s = 0; s < rec.responses.size(); ++s) {
      const ModelResponse& resp = rec.responses[s];
      const bool extracted_ok =
          s < rec.extracted.size() && rec.extracted[s].letter.has_value();
      if (resp.finish == FinishReason::error || !extracted_ok) {
        ++table.excluded;
        continue;
      }
      const int tokens = by_output ? resp.completion_tokens : resp.prompt_tokens;
      const bool correct = (*rec.extracted[s].letter == rec.gold);
      auto& bin = bins[tokens / bin_width];
      ++bin.first;
      if (correct) ++bin.second;
    }
  }

  for (const auto& [idx, counts] : bins) {
    BinRow row;
    row.lo = idx * bin_width;
    row.hi = (idx + 1) * bin_width;
    row.n = counts.first;
    row.n_correct = counts.second;
    row.accuracy = counts.first ? static_cast<double>(counts.second) / counts.first : 0.0;
    row.low_support = counts.first < kLowSupportThreshold;
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace

BinnedTable bin_by_output_tokens(const std::vector<EnsembleResult>& records,
                                 int bin_width) {
  return bin_records(records, bin_width, true);
}

BinnedTable bin_by_input_tokens(const std::vector<EnsembleResult>& records,
                                int bin_width) {
  return bin_records(records, bin_width, false);
}

std::string bins_csv(const BinnedTable& table, const std::string& fingerprint_hash) {
  std::string out = "# by=" + table.by + " width=" + std::to_string(table.width) +
                    " excluded=" + std::to_string(table.excluded) +
                    " mixed_tasks=" + (table.mixed_tasks ? "1" : "0") +
                    " fingerprint=" + fingerprint_hash + "\n";
  out += "bin_lo,bin_hi,n,n_correct,accuracy,low_support\n";
  for (const BinRow& row : table.rows) {
    out += std::to_string(row.lo) + "," + std::to_string(row.hi) + "," +
           std::to_string(row.n) + "," + std::to_string(row.n_correct) + "," +
           format_accuracy(row.accuracy) + "," + (row.low_support ? "1" : "0") +
           "\n";
  }
  return out;
}

json bins_to_json(const BinnedTable& table) {
  json rows = json::array();
  for (const BinRow& row : table.rows) {
    rows.push_back({{"lo", row.lo},
                    {"hi", row.hi},
                    {"n", row.n},
                    {"n_correct", row.n_correct},
                    {"accuracy", row.accuracy},
                    {"low_support", row.low_support}});
  }
  return json{{"by", table.by},
              {"width", table.width},
              {"excluded", table.excluded},
              {"mixed_tasks", table.mixed_tasks},
              {"bins", rows}};
}

}  // namespace medeval
