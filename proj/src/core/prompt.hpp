#pragma once

#include <string>
#include <vector>

#include "core/dataset.hpp"

namespace medeval {

enum class Role { system, user, assistant };

const char* role_name(Role role);

struct Message {
  Role role;
  std::string content;
  bool operator==(const Message&) const = default;
};

// At most one system message and it comes first; the final message is a
// user turn.
using MessageSequence = std::vector<Message>;

// The terminal-format sentence is always present so the extraction grammar
// has something to latch onto; the CoT flag prepends the step-by-step
// elicitation.
inline constexpr const char* kAnswerFormatInstruction =
    "End your answer with 'The answer is (X)'.";
inline constexpr const char* kCotInstruction =
    "Let's think step by step. End your answer with 'The answer is (X)'.";

// User-turn template. Custom templates may use {context}, {stem}, {options}.
inline constexpr const char* kDefaultTemplate =
    "{context}Question: {stem}\n{options}";

struct PromptConfig {
  std::string system_instruction;  // empty by default
  std::string template_text = kDefaultTemplate;
  bool cot = false;
  int k = 0;                       // number of few-shot exemplars
  bool retrieval = false;          // context paragraphs allowed only if set
};

struct Exemplar {
  Question question;
  std::string worked_answer;
  bool operator==(const Exemplar&) const = default;
};

struct PromptSpec {
  std::string system_instruction;
  std::string template_text;
  std::vector<Exemplar> exemplars;
  std::vector<std::string> context_paragraphs;
  Question target;
  bool cot = false;
};

std::string render_options(const Question& q);

// One user turn: context block (abstract + retrieved paragraphs under a
// "Context:" header), template expansion, then the elicitation sentence.
std::string render_question_turn(const Question& q,
                                 const std::vector<std::string>& context,
                                 const std::string& template_text, bool cot);

std::string worked_answer_for(const Question& q);

PromptSpec build_prompt(const Question& target, const PromptConfig& config,
                        const std::vector<Question>& exemplars,
                        const std::vector<std::string>& context);

MessageSequence render_messages(const PromptSpec& spec);

// Canonical flattening used for prompt hashing and mock-script matching;
// format is "<role>: <content>\n" per message.
std::string prompt_transcript(const MessageSequence& messages);

std::string load_template_file(const std::string& path);

}  // namespace medeval
