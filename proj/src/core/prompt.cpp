#include "core/prompt.hpp"

#include "core/text.hpp"

namespace medeval {

const char* role_name(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "unknown";
}

std::string render_options(const Question& q) {
  std::string out;
  for (size_t i = 0; i < q.options.size(); ++i) {
    out += static_cast<char>('A' + i);
    out += ". ";
    out += q.options[i];
    if (i + 1 < q.options.size()) out += "\n";
  }
  return out;
}

std::string render_question_turn(const Question& q,
                                 const std::vector<std::string>& context,
                                 const std::string& template_text, bool cot) {
  std::string context_block;
  {
    std::vector<const std::string*> paragraphs;
    if (q.context && !trim(*q.context).empty()) paragraphs.push_back(&*q.context);
    for (const std::string& p : context) paragraphs.push_back(&p);
    if (!paragraphs.empty()) {
      context_block = "Context:\n";
      for (const std::string* p : paragraphs) {
        context_block += *p;
        context_block += "\n\n";
      }
    }
  }

  std::string body = template_text;
  bool has_context_slot = body.find("{context}") != std::string::npos;
  replace_all(body, "{context}", context_block);
  replace_all(body, "{stem}", q.stem);
  replace_all(body, "{options}", render_options(q));
  if (!has_context_slot && !context_block.empty()) body = context_block + body;

  body += "\n";
  body += cot ? kCotInstruction : kAnswerFormatInstruction;
  return body;
}

std::string worked_answer_for(const Question& q) {
  return std::string("The answer is (") + q.gold + ").";
}

PromptSpec build_prompt(const Question& target, const PromptConfig& config,
                        const std::vector<Question>& exemplars,
                        const std::vector<std::string>& context) {
  if (static_cast<int>(exemplars.size()) != config.k)
    throw Error(ErrorCode::inconsistent_config,
                "config k=" + std::to_string(config.k) + " but " +
                    std::to_string(exemplars.size()) + " exemplars supplied");
  if (!config.retrieval && !context.empty())
    throw Error(ErrorCode::inconsistent_config,
                "context paragraphs supplied but retrieval is disabled");

  PromptSpec spec;
  spec.system_instruction = config.system_instruction;
  spec.template_text = config.template_text;
  spec.cot = config.cot;
  spec.target = target;
  spec.context_paragraphs = context;
  spec.exemplars.reserve(exemplars.size());
  for (const Question& q : exemplars)
    spec.exemplars.push_back({q, worked_answer_for(q)});
  return spec;
}

MessageSequence render_messages(const PromptSpec& spec) {
  MessageSequence out;
  if (!spec.system_instruction.empty())
    out.push_back({Role::system, spec.system_instruction});
  for (const Exemplar& ex : spec.exemplars) {
    out.push_back({Role::user, render_question_turn(ex.question, {},
                                                    spec.template_text,
                                                    spec.cot)});
    out.push_back({Role::assistant, ex.worked_answer});
  }
  out.push_back({Role::user,
                 render_question_turn(spec.target, spec.context_paragraphs,
                                      spec.template_text, spec.cot)});
  return out;
}

std::string prompt_transcript(const MessageSequence& messages) {
  std::string out;
  for (const Message& m : messages) {
    out += role_name(m.role);
    out += ": ";
    out += m.content;
    out += "\n";
  }
  return out;
}

std::string load_template_file(const std::string& path) {
  std::string text = read_file(path);
  // one trailing newline is file convention, not template content
  if (!text.empty() && text.back() == '\n') text.pop_back();
  if (!text.empty() && text.back() == '\r') text.pop_back();
  return text;
}

}  // namespace medeval
