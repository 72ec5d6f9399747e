#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "core/backend.hpp"
#include "core/dataset.hpp"
#include "core/prompt.hpp"

namespace medeval {

// Extraction grammar over a free-text completion, case-insensitive, in
// priority order:
//   1. "the answer is (X)" / "the answer is X"
//   2. "answer: X"
//   3. a standalone letter token followed by '.' or ')'
// Within a tier the LAST occurrence wins. Throws no_answer_found when no
// tier matches and letter_out_of_range when the matched letter is not in
// `letters`. Returns the uppercase letter.
char extract_answer(std::string_view text, const std::set<char>& letters);

struct ExtractOutcome {
  std::optional<char> letter;
  std::string failure;  // error code name when !letter

  bool operator==(const ExtractOutcome&) const = default;
};

ExtractOutcome try_extract(std::string_view text, const std::set<char>& letters);

// Modal letter; ties go to the tied letter whose first occurrence in the
// list comes earliest.
char majority_vote(const std::vector<char>& answers);

struct EnsembleConfig {
  PromptConfig prompt;
  int n = 5;
  double temperature = 0.7;
  int max_tokens = 1024;
  uint64_t seed = 0;
  std::vector<Question> exemplars;
  std::vector<std::string> context;
};

struct EnsembleResult {
  std::string qid;
  TaskTag task = TaskTag::medqa;
  char gold = 'A';
  std::vector<ModelResponse> responses;
  std::vector<ExtractOutcome> extracted;   // one per response
  std::optional<char> voted;               // nullopt = unevaluable
  bool correct = false;                    // defined only when voted
  std::string error;                       // per-question pipeline error
};

// Builds the prompt once, samples n completions, extracts per sample and
// votes over the successful extractions only.
EnsembleResult run_ensemble(const Question& q, const EnsembleConfig& cfg,
                            Backend& backend);

}  // namespace medeval
