#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "core/backend.hpp"
#include "core/dataset.hpp"

namespace medeval {

struct PromptCandidate {
  int id = 0;                    // 1-based position in the trace
  int iteration = 0;             // 0 = seed candidates
  std::optional<int> parent;     // id of the candidate it was derived from
  std::string template_text;     // instruction text; may be empty
  std::optional<double> score;   // minibatch accuracy in [0, 1]
  std::string feedback;          // textual gradient used to produce it
  std::string fingerprint_hash;  // of the scoring run
  bool accepted = false;
};

// One failed validation question: what was asked, what the model answered,
// and its reasoning. Feeds the optimizer's textual gradient.
struct FailureCase {
  std::string stem;
  std::vector<std::string> options;
  std::string wrong;      // voted letter, or "(none)" when unevaluable
  std::string reasoning;  // full chain of thought from one sample
};

inline constexpr int kMaxFailureCases = 5;

std::string render_failure_payload(const std::vector<FailureCase>& failures);

struct ProposeOptions {
  double temperature = 0.7;
  int max_tokens = 1024;
};

// Asks the optimizer backend for a revised instruction; the reply is read
// from the last <instruction>...</instruction> pair (whole trimmed text when
// tags are absent). An echo of the current template raises
// proposal_stagnant. Requires failures unless current.iteration == 0.
PromptCandidate propose_prompt(Backend& optimizer, const PromptCandidate& current,
                               const std::vector<FailureCase>& failures,
                               const ProposeOptions& opts = {});

struct ScoredRun {
  double accuracy = 0.0;
  std::vector<FailureCase> failures;  // capped at kMaxFailureCases
  std::string fingerprint_hash;
};

using ScoreFn = std::function<ScoredRun(const std::string& template_text,
                                        const std::vector<Question>& minibatch)>;
using ProposeFn = std::function<PromptCandidate(const PromptCandidate& current,
                                                const std::vector<FailureCase>& failures)>;
// Called once per newly scored candidate, with the gradient from its run.
using TraceSink = std::function<void(const PromptCandidate&,
                                     const std::vector<FailureCase>& gradient)>;

struct OptimizeLoopConfig {
  int iterations = 10;  // proposal iterations after the seeds
  int minibatch = 50;
  uint64_t seed = 0;
  std::string initial_template;
};

struct OptimizeResult {
  PromptCandidate best;
  std::vector<PromptCandidate> trace;
  double final_score = 0.0;  // best template re-scored on the full set
  std::string stop_reason;   // iterations_exhausted | proposal_stagnant | zero_loss
};

// A persisted trace: candidates plus the failure cases captured during each
// candidate's scoring run (the gradient feeding the next proposal).
struct TraceHead {
  std::vector<PromptCandidate> candidates;
  std::vector<std::vector<FailureCase>> gradients;
};

// Greedy accept-if-strictly-better loop. The seed template is scored at
// iteration 0 (plus the empty template as a baseline when the seed is
// nonempty); each later iteration proposes from the incumbent using the
// failures of its own scoring run, scores the proposal on a freshly seeded
// minibatch, and accepts only strict improvements. `resume_head` replays a
// previously persisted trace.
OptimizeResult optimize_prompt(const std::vector<Question>& val_questions,
                               const OptimizeLoopConfig& cfg, ScoreFn score,
                               ProposeFn propose, TraceSink sink = nullptr,
                               TraceHead resume_head = {});

nlohmann::json candidate_to_json(const PromptCandidate& c,
                                 const std::vector<FailureCase>& gradient);
PromptCandidate candidate_from_json(const nlohmann::json& j,
                                    std::vector<FailureCase>* gradient_out);

TraceHead parse_trace(const std::string& trace_text);

}  // namespace medeval
