#include "core/ensemble.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "core/text.hpp"

namespace medeval {

namespace {

// Parses a letter candidate at `pos` (just past a cue phrase): optional
// whitespace, optional '(', a letter, then a non-alphanumeric boundary.
std::optional<char> letter_after(std::string_view low, size_t pos) {
  while (pos < low.size() && (low[pos] == ' ' || low[pos] == '\t')) ++pos;
  if (pos < low.size() && low[pos] == '(') {
    ++pos;
    while (pos < low.size() && (low[pos] == ' ' || low[pos] == '\t')) ++pos;
  }
  if (pos >= low.size() || !is_ascii_letter(low[pos])) return std::nullopt;
  if (pos + 1 < low.size() && is_ascii_alnum(low[pos + 1])) return std::nullopt;
  return static_cast<char>(std::toupper(low[pos]));
}

// Last candidate produced by any occurrence of `cue`.
std::optional<char> last_cue_candidate(std::string_view low, std::string_view cue) {
  std::optional<char> found;
  size_t pos = 0;
  while ((pos = low.find(cue, pos)) != std::string_view::npos) {
    if (auto c = letter_after(low, pos + cue.size())) found = c;
    pos += cue.size();
  }
  return found;
}

// Tier 3: standalone letter token immediately followed by '.' or ')'.
std::optional<char> last_terminal_letter(std::string_view low) {
  std::optional<char> found;
  for (size_t i = 0; i < low.size(); ++i) {
    if (!is_ascii_letter(low[i])) continue;
    if (i > 0 && is_ascii_alnum(low[i - 1])) continue;
    if (i + 1 >= low.size()) continue;
    if (low[i + 1] == '.' || low[i + 1] == ')')
      found = static_cast<char>(std::toupper(low[i]));
  }
  return found;
}

}  // namespace

char extract_answer(std::string_view text, const std::set<char>& letters) {
  if (letters.empty())
    throw Error(ErrorCode::invalid_argument, "letter set is empty");
  std::set<char> upper;
  for (char c : letters) upper.insert(static_cast<char>(std::toupper(c)));

  const std::string low = to_lower_ascii(text);
  std::optional<char> candidate = last_cue_candidate(low, "the answer is");
  if (!candidate) candidate = last_cue_candidate(low, "answer:");
  if (!candidate) candidate = last_terminal_letter(low);

  if (!candidate)
    throw Error(ErrorCode::no_answer_found, "no answer pattern in completion");
  if (!upper.count(*candidate))
    throw Error(ErrorCode::letter_out_of_range,
                std::string("extracted letter '") + *candidate +
                    "' is not an option");
  return *candidate;
}

ExtractOutcome try_extract(std::string_view text, const std::set<char>& letters) {
  try {
    return {extract_answer(text, letters), ""};
  } catch (const Error& e) {
    return {std::nullopt, error_code_name(e.code())};
  }
}

char majority_vote(const std::vector<char>& answers) {
  if (answers.empty())
    throw Error(ErrorCode::invalid_argument, "majority_vote over empty list");
  std::array<int, 26> counts{};
  std::array<size_t, 26> first_pos{};
  first_pos.fill(answers.size());
  for (size_t i = 0; i < answers.size(); ++i) {
    int slot = std::toupper(answers[i]) - 'A';
    if (slot < 0 || slot >= 26)
      throw Error(ErrorCode::invalid_argument, "vote entry is not a letter");
    ++counts[slot];
    first_pos[slot] = std::min(first_pos[slot], i);
  }
  int best = -1;
  for (int slot = 0; slot < 26; ++slot) {
    if (counts[slot] == 0) continue;
    if (best < 0 || counts[slot] > counts[best] ||
        (counts[slot] == counts[best] && first_pos[slot] < first_pos[best]))
      best = slot;
  }
  return static_cast<char>('A' + best);
}

EnsembleResult run_ensemble(const Question& q, const EnsembleConfig& cfg,
                            Backend& backend) {
  if (cfg.n < 1) throw Error(ErrorCode::invalid_argument, "ensemble n must be >= 1");

  PromptSpec spec = build_prompt(q, cfg.prompt, cfg.exemplars, cfg.context);
  CompletionRequest req;
  req.messages = render_messages(spec);
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.samples = cfg.n;
  req.seed = cfg.seed;

  EnsembleResult result;
  result.qid = q.id;
  result.task = q.task;
  result.gold = q.gold;
  result.responses = backend.chat_complete(req);

  const auto letter_vec = q.letters();
  const std::set<char> letters(letter_vec.begin(), letter_vec.end());
  std::vector<char> votes;
  result.extracted.reserve(result.responses.size());
  for (const ModelResponse& r : result.responses) {
    // length-truncated responses still get a shot: a verdict may precede
    // the cut.
    ExtractOutcome outcome = try_extract(r.text, letters);
    if (outcome.letter) votes.push_back(*outcome.letter);
    result.extracted.push_back(std::move(outcome));
  }
  if (!votes.empty()) {
    result.voted = majority_vote(votes);
    result.correct = (*result.voted == q.gold);
  }
  return result;
}

}  // namespace medeval
