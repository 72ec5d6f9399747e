#include "core/optimizer.hpp"

#include <algorithm>

#include "core/hash.hpp"
#include "core/text.hpp"

namespace medeval {

using nlohmann::json;

std::string render_failure_payload(const std::vector<FailureCase>& failures) {
  std::string out;
  const size_t count = std::min<size_t>(failures.size(), kMaxFailureCases);
  for (size_t i = 0; i < count; ++i) {
    const FailureCase& f = failures[i];
    out += "[" + std::to_string(i + 1) + "] Question: " + f.stem + "\n";
    out += "Options:\n";
    for (size_t o = 0; o < f.options.size(); ++o) {
      out += static_cast<char>('A' + o);
      out += ". ";
      out += f.options[o];
      out += "\n";
    }
    out += "Model answer: " + f.wrong + "\n";
    out += "Model reasoning: " + f.reasoning + "\n";
    if (i + 1 < count) out += "\n";
  }
  return out;
}

namespace {

constexpr const char* kOptimizerSystem =
    "You are an expert prompt engineer. You improve the instruction given to "
    "a smaller model that answers medical multiple-choice questions.";

std::string parse_instruction_reply(const std::string& reply) {
  constexpr std::string_view open_tag = "<instruction>";
  constexpr std::string_view close_tag = "</instruction>";
  size_t best_open = std::string::npos;
  size_t pos = 0;
  while (true) {
    size_t open = reply.find(open_tag, pos);
    if (open == std::string::npos) break;
    if (reply.find(close_tag, open + open_tag.size()) != std::string::npos)
      best_open = open;
    pos = open + open_tag.size();
  }
  if (best_open == std::string::npos) return std::string(trim(reply));
  size_t start = best_open + open_tag.size();
  size_t close = reply.find(close_tag, start);
  return std::string(trim(reply.substr(start, close - start)));
}

}  // namespace

PromptCandidate propose_prompt(Backend& optimizer, const PromptCandidate& current,
                               const std::vector<FailureCase>& failures,
                               const ProposeOptions& opts) {
  if (failures.empty() && current.iteration != 0)
    throw Error(ErrorCode::invalid_argument,
                "propose_prompt needs failures unless at iteration 0");

  std::string payload = failures.empty()
                            ? "No failure examples are available yet. Improve "
                              "this instruction."
                            : render_failure_payload(failures);

  std::string user = "Current instruction:\n<instruction>" +
                     current.template_text + "</instruction>\n\n" + payload +
                     "\n\nRewrite the instruction so the model answers more "
                     "of these correctly. Reply with only the new instruction "
                     "wrapped in <instruction></instruction> tags; an empty "
                     "pair removes the instruction.";

  CompletionRequest req;
  req.messages = {{Role::system, kOptimizerSystem}, {Role::user, user}};
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;
  req.samples = 1;

  std::vector<ModelResponse> replies = optimizer.chat_complete(req);
  if (replies.empty() || replies[0].finish == FinishReason::error)
    throw Error(ErrorCode::protocol_violation, "optimizer returned no proposal");

  std::string proposal = parse_instruction_reply(replies[0].text);
  if (proposal == current.template_text)
    throw Error(ErrorCode::proposal_stagnant,
                "optimizer echoed the current template");

  PromptCandidate candidate;
  candidate.template_text = std::move(proposal);
  candidate.parent = current.id;
  candidate.feedback = std::move(payload);
  candidate.iteration = current.iteration + 1;
  return candidate;
}

json candidate_to_json(const PromptCandidate& c,
                       const std::vector<FailureCase>& gradient) {
  json j;
  j["id"] = c.id;
  j["iteration"] = c.iteration;
  if (c.parent) j["parent"] = *c.parent;
  else j["parent"] = nullptr;
  j["template"] = c.template_text;
  if (c.score) j["score"] = *c.score;
  else j["score"] = nullptr;
  j["feedback"] = c.feedback;
  j["fingerprint_hash"] = c.fingerprint_hash;
  j["accepted"] = c.accepted;
  json grad = json::array();
  for (const FailureCase& f : gradient) {
    grad.push_back({{"stem", f.stem},
                    {"options", f.options},
                    {"wrong", f.wrong},
                    {"reasoning", f.reasoning}});
  }
  j["gradient"] = grad;
  return j;
}

PromptCandidate candidate_from_json(const json& j,
                                    std::vector<FailureCase>* gradient_out) {
  PromptCandidate c;
  c.id = j.at("id").get<int>();
  c.iteration = j.at("iteration").get<int>();
  if (j.contains("parent") && j["parent"].is_number_integer())
    c.parent = j["parent"].get<int>();
  c.template_text = j.at("template").get<std::string>();
  if (j.contains("score") && j["score"].is_number())
    c.score = j["score"].get<double>();
  c.feedback = j.value("feedback", "");
  c.fingerprint_hash = j.value("fingerprint_hash", "");
  c.accepted = j.value("accepted", false);
  if (gradient_out) {
    gradient_out->clear();
    if (j.contains("gradient") && j["gradient"].is_array()) {
      for (const json& g : j["gradient"]) {
        FailureCase f;
        f.stem = g.value("stem", "");
        f.options = g.value("options", std::vector<std::string>{});
        f.wrong = g.value("wrong", "");
        f.reasoning = g.value("reasoning", "");
        gradient_out->push_back(std::move(f));
      }
    }
  }
  return c;
}

TraceHead parse_trace(const std::string& trace_text) {
  TraceHead head;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos <= trace_text.size()) {
    size_t nl = trace_text.find('\n', pos);
    std::string_view line = std::string_view(trace_text).substr(
        pos, nl == std::string::npos ? trace_text.size() - pos : nl - pos);
    pos = (nl == std::string::npos) ? trace_text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::malformed_record,
                  "trace line " + std::to_string(line_no) + ": " + e.what());
    }
    std::vector<FailureCase> gradient;
    try {
      head.candidates.push_back(candidate_from_json(j, &gradient));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::malformed_record,
                  "trace line " + std::to_string(line_no) + ": " + e.what());
    }
    head.gradients.push_back(std::move(gradient));
  }
  return head;
}

OptimizeResult optimize_prompt(const std::vector<Question>& val_questions,
                               const OptimizeLoopConfig& cfg, ScoreFn score,
                               ProposeFn propose, TraceSink sink,
                               TraceHead resume_head) {
  if (cfg.iterations < 1)
    throw Error(ErrorCode::invalid_argument, "iterations must be >= 1");
  if (cfg.minibatch < 1)
    throw Error(ErrorCode::invalid_argument, "minibatch must be >= 1");
  if (static_cast<size_t>(cfg.minibatch) > val_questions.size())
    throw Error(ErrorCode::invalid_argument,
                "minibatch " + std::to_string(cfg.minibatch) +
                    " exceeds validation set size " +
                    std::to_string(val_questions.size()));
  if (resume_head.candidates.size() != resume_head.gradients.size())
    throw Error(ErrorCode::malformed_record, "trace gradients out of step");

  OptimizeResult result;
  std::vector<std::vector<FailureCase>> gradients;

  auto minibatch_for = [&](int iteration) {
    return sample_few_shot(val_questions, static_cast<size_t>(cfg.minibatch),
                           mix_seed(cfg.seed, static_cast<uint64_t>(iteration)));
  };

  // index of the incumbent in result.trace
  int best_idx = -1;
  auto consider = [&](size_t idx) {
    PromptCandidate& cand = result.trace[idx];
    if (best_idx < 0 || (cand.score && *cand.score > *result.trace[best_idx].score)) {
      cand.accepted = true;
      best_idx = static_cast<int>(idx);
    }
  };

  auto score_candidate = [&](PromptCandidate& cand, int iteration) {
    ScoredRun run = score(cand.template_text, minibatch_for(iteration));
    cand.score = run.accuracy;
    cand.fingerprint_hash = run.fingerprint_hash;
    if (run.failures.size() > static_cast<size_t>(kMaxFailureCases))
      run.failures.resize(kMaxFailureCases);
    gradients.push_back(std::move(run.failures));
  };

  int start_iteration = 1;
  int next_id = 1;
  if (!resume_head.candidates.empty()) {
    for (size_t i = 0; i < resume_head.candidates.size(); ++i) {
      PromptCandidate& c = resume_head.candidates[i];
      if (!c.score)
        throw Error(ErrorCode::malformed_record,
                    "resume trace has an unscored candidate");
      result.trace.push_back(std::move(c));
      gradients.push_back(std::move(resume_head.gradients[i]));
      next_id = std::max(next_id, result.trace.back().id + 1);
      start_iteration = std::max(start_iteration, result.trace.back().iteration + 1);
    }
    // Re-derive the incumbent with the same accept rule.
    for (size_t i = 0; i < result.trace.size(); ++i) {
      result.trace[i].accepted = false;
      consider(i);
    }
  } else {
    PromptCandidate seed;
    seed.id = next_id++;
    seed.iteration = 0;
    seed.template_text = cfg.initial_template;
    result.trace.push_back(std::move(seed));
    score_candidate(result.trace.back(), 0);
    consider(result.trace.size() - 1);
    if (sink) sink(result.trace.back(), gradients.back());

    if (!cfg.initial_template.empty()) {
      // The empty instruction is always in the running as a baseline.
      PromptCandidate empty;
      empty.id = next_id++;
      empty.iteration = 0;
      result.trace.push_back(std::move(empty));
      score_candidate(result.trace.back(), 0);
      consider(result.trace.size() - 1);
      if (sink) sink(result.trace.back(), gradients.back());
    }
  }

  result.stop_reason = "iterations_exhausted";
  for (int it = start_iteration; it <= cfg.iterations; ++it) {
    const PromptCandidate& best = result.trace[best_idx];
    const std::vector<FailureCase>& failures = gradients[best_idx];
    if (*best.score >= 1.0) {
      result.stop_reason = "zero_loss";
      break;
    }
    PromptCandidate cand;
    try {
      cand = propose(best, failures);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::proposal_stagnant) {
        result.stop_reason = "proposal_stagnant";
        break;
      }
      throw;
    }
    cand.id = next_id++;
    cand.iteration = it;
    cand.parent = best.id;
    cand.accepted = false;
    result.trace.push_back(std::move(cand));
    score_candidate(result.trace.back(), it);
    consider(result.trace.size() - 1);
    if (sink) sink(result.trace.back(), gradients.back());
  }

  result.best = result.trace[best_idx];
  ScoredRun final_run = score(result.best.template_text, val_questions);
  result.final_score = final_run.accuracy;
  return result;
}

}  // namespace medeval
