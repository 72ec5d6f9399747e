#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/ensemble.hpp"
#include "core/retrieval.hpp"

namespace medeval {

struct EvalReport {
  TaskTag task = TaskTag::medqa;
  int n_questions = 0;
  int n_unevaluable = 0;
  double accuracy_strict = 0.0;     // unevaluable counted wrong (headline)
  double accuracy_evaluable = 0.0;  // unevaluable excluded
  bool usage_approximate = false;
  std::vector<EnsembleResult> records;
  nlohmann::json fingerprint;       // full configuration snapshot
};

struct EvalOptions {
  EnsembleConfig base;                        // exemplars pre-sampled by caller
  const ContextRetriever* retriever = nullptr;  // null = retrieval off
  int parallelism = 8;
};

// One EnsembleResult per question, input order preserved. Per-question
// errors are recorded on the result, never dropped; only
// backend_unreachable aborts the task.
EvalReport evaluate_task(const std::vector<Question>& questions,
                         const EvalOptions& opts, Backend& backend);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// report.json plus summary.csv
// (task,n,accuracy_strict,accuracy_evaluable,n_unevaluable,fingerprint).
void write_report(const EvalReport& report, const std::string& dir);
EvalReport load_report(const std::string& path);

std::string summary_csv_header();
std::string summary_csv_row(const EvalReport& report);

// --- stepwise ablation ---------------------------------------------------

struct AblationStep {
  std::string name;
  nlohmann::json delta;  // JSON merge patch over the cumulative run config
};

struct AblationRow {
  std::string name;
  nlohmann::json delta;
  double accuracy = 0.0;
  double delta_vs_prev = 0.0;  // 0 for the baseline row
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

// Applies step deltas cumulatively to `base_config` and calls
// eval_accuracy on each merged config. The deltas telescope by
// construction: last accuracy = first + sum of deltas.
AblationTable run_stepwise_ablation(
    const std::vector<AblationStep>& steps, const nlohmann::json& base_config,
    const std::function<double(const nlohmann::json&)>& eval_accuracy);

std::vector<AblationStep> parse_ablation_plan(const std::string& plan_json_text);
std::string ablation_csv(const AblationTable& table);
nlohmann::json ablation_to_json(const AblationTable& table);

// --- token binning --------------------------------------------------------

inline constexpr int kLowSupportThreshold = 20;

struct BinRow {
  int lo = 0;   // inclusive
  int hi = 0;   // exclusive
  int n = 0;
  int n_correct = 0;
  double accuracy = 0.0;
  bool low_support = false;  // n < kLowSupportThreshold
};

struct BinnedTable {
  std::string by;  // "output" or "input"
  int width = 256;
  std::vector<BinRow> rows;  // non-empty bins, ascending
  int excluded = 0;          // finish=error or failed extraction
  bool mixed_tasks = false;
};

// Every response is one observation; correctness is per-response
// (extracted letter equals gold). finish=error and failed extractions are
// excluded and counted separately.
BinnedTable bin_by_output_tokens(const std::vector<EnsembleResult>& records,
                                 int bin_width);
BinnedTable bin_by_input_tokens(const std::vector<EnsembleResult>& records,
                                int bin_width);

std::string bins_csv(const BinnedTable& table, const std::string& fingerprint_hash);
nlohmann::json bins_to_json(const BinnedTable& table);

}  // namespace medeval
