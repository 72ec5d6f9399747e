#include "core/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "core/hash.hpp"
#include "core/text.hpp"

namespace medeval {

using nlohmann::json;

const char* finish_reason_name(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "unknown";
}

FinishReason parse_finish_reason(std::string_view name) {
  if (name == "length") return FinishReason::length;
  if (name == "error") return FinishReason::error;
  return FinishReason::stop;
}

uint64_t prompt_hash(const MessageSequence& messages) {
  return fnv1a64(prompt_transcript(messages));
}

namespace {

void validate_request(const CompletionRequest& req) {
  if (req.samples < 1)
    throw Error(ErrorCode::invalid_argument, "samples must be >= 1");
  if (req.max_tokens < 1)
    throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 1");
  if (req.temperature < 0.0)
    throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
}

json messages_to_json(const MessageSequence& messages) {
  json arr = json::array();
  for (const Message& m : messages)
    arr.push_back({{"role", role_name(m.role)}, {"content", m.content}});
  return arr;
}

struct SplitUrl {
  std::string scheme_host;  // scheme://host[:port]
  std::string path_prefix;  // "" or "/prefix"
};

SplitUrl split_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::invalid_argument, "backend URL has no scheme: " + base_url);
  auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host = base_url;
  } else {
    out.scheme_host = base_url.substr(0, path_start);
    out.path_prefix = base_url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
      out.path_prefix.pop_back();
  }
  return out;
}

httplib::Headers auth_headers(const std::string& api_key_env) {
  httplib::Headers headers;
  if (!api_key_env.empty()) {
    if (const char* key = std::getenv(api_key_env.c_str()); key && *key)
      headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

// Shared retry loop for POSTing JSON; returns the 200 body.
std::string post_json_with_retry(const std::string& scheme_host,
                                 const std::string& path,
                                 const std::string& body,
                                 const std::string& api_key_env,
                                 const RetryPolicy& retry, int timeout_s,
                                 const std::string& what) {
  std::string last_error;
  double backoff_ms = retry.initial_backoff_ms;
  const int attempts = retry.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long>(backoff_ms)));
      backoff_ms *= retry.backoff_multiplier;
    }
    httplib::Client cli(scheme_host);
    cli.set_connection_timeout(timeout_s, 0);
    cli.set_read_timeout(timeout_s, 0);
    cli.set_write_timeout(timeout_s, 0);
    auto res = cli.Post(path, auth_headers(api_key_env), body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    std::string snippet = res->body.substr(0, 200);
    throw Error(ErrorCode::protocol_violation,
                what + ": backend replied HTTP " + std::to_string(res->status) +
                    ": " + snippet);
  }
  throw Error(ErrorCode::backend_unreachable,
              what + ": " + scheme_host + " unreachable after " +
                  std::to_string(attempts) + " attempts (" + last_error + ")");
}

}  // namespace

HttpBackend::HttpBackend(std::string base_url, std::string model,
                         HttpBackendOptions opts)
    : base_url_(std::move(base_url)), model_(std::move(model)),
      opts_(std::move(opts)) {
  SplitUrl split = split_url(base_url_);
  scheme_host_ = split.scheme_host;
  path_prefix_ = split.path_prefix;
}

std::string HttpBackend::id() const { return base_url_ + "#" + model_; }

std::vector<ModelResponse> HttpBackend::chat_complete(const CompletionRequest& req) {
  validate_request(req);
  json body = {{"model", model_},
               {"messages", messages_to_json(req.messages)},
               {"temperature", req.temperature},
               {"max_tokens", req.max_tokens},
               {"n", req.samples}};

  std::string reply_body = post_json_with_retry(
      scheme_host_, path_prefix_ + "/v1/chat/completions", body.dump(),
      opts_.api_key_env, opts_.retry, opts_.timeout_s, "chat_complete");

  json reply;
  try {
    reply = json::parse(reply_body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::protocol_violation,
                std::string("reply is not valid JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("choices") || !reply["choices"].is_array())
    throw Error(ErrorCode::protocol_violation, "reply has no 'choices' array");
  const json& choices = reply["choices"];

  int usage_prompt = -1;
  int usage_completion = -1;
  if (reply.contains("usage") && reply["usage"].is_object()) {
    const json& usage = reply["usage"];
    if (usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number_integer())
      usage_prompt = usage["prompt_tokens"].get<int>();
    if (usage.contains("completion_tokens") &&
        usage["completion_tokens"].is_number_integer())
      usage_completion = usage["completion_tokens"].get<int>();
  }

  const int approx_prompt = approx_token_count(prompt_transcript(req.messages));
  std::vector<ModelResponse> out;
  out.reserve(req.samples);
  for (int i = 0; i < req.samples; ++i) {
    ModelResponse r;
    if (i >= static_cast<int>(choices.size())) {
      r.finish = FinishReason::error;  // backend under-delivered; keep the slot
    } else {
      const json& choice = choices[i];
      if (choice.contains("message") && choice["message"].is_object() &&
          choice["message"].contains("content") &&
          choice["message"]["content"].is_string()) {
        r.text = choice["message"]["content"].get<std::string>();
        r.finish = FinishReason::stop;
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
          r.finish = parse_finish_reason(choice["finish_reason"].get<std::string>());
      } else {
        r.finish = FinishReason::error;
      }
    }

    if (usage_prompt >= 0) {
      r.prompt_tokens = usage_prompt;
    } else {
      r.prompt_tokens = approx_prompt;
      r.usage_approximate = true;
    }
    // usage.completion_tokens is the aggregate across choices, so it is only
    // exact per-sample when n == 1.
    if (r.finish == FinishReason::length) {
      r.completion_tokens = req.max_tokens;
    } else if (req.samples == 1 && usage_completion >= 0) {
      r.completion_tokens = usage_completion;
    } else {
      r.completion_tokens = approx_token_count(r.text);
      r.usage_approximate = true;
    }
    out.push_back(std::move(r));
  }
  return out;
}

MockScript MockScript::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_record,
                std::string("mock script is not valid JSON: ") + e.what());
  }
  MockScript script;
  if (j.contains("fallback") && j["fallback"].is_object()) {
    const json& fb = j["fallback"];
    if (fb.contains("mode") && fb["mode"].is_string())
      script.fallback = fb["mode"].get<std::string>();
    if (fb.contains("text") && fb["text"].is_string())
      script.fallback_text = fb["text"].get<std::string>();
    if (fb.contains("letters") && fb["letters"].is_string())
      script.fallback_letters = fb["letters"].get<std::string>();
  }
  if (script.fallback != "letter" && script.fallback != "fixed" &&
      script.fallback != "none")
    throw Error(ErrorCode::malformed_record,
                "mock fallback mode must be letter|fixed|none");
  if (j.contains("entries")) {
    if (!j["entries"].is_array())
      throw Error(ErrorCode::malformed_record, "mock 'entries' must be an array");
    for (const json& e : j["entries"]) {
      MockRule rule;
      if (e.contains("match_hash") && e["match_hash"].is_string())
        rule.match_hash = e["match_hash"].get<std::string>();
      if (e.contains("match_contains") && e["match_contains"].is_string())
        rule.match_contains = e["match_contains"].get<std::string>();
      if (rule.match_hash.empty() && rule.match_contains.empty())
        throw Error(ErrorCode::malformed_record,
                    "mock entry needs match_hash or match_contains");
      if (e.contains("responses") && e["responses"].is_array())
        for (const json& r : e["responses"])
          rule.responses.push_back(r.get<std::string>());
      if (e.contains("finish") && e["finish"].is_string())
        rule.finish = e["finish"].get<std::string>();
      script.rules.push_back(std::move(rule));
    }
  }
  return script;
}

MockScript MockScript::load(const std::string& path) {
  return parse(read_file(path));
}

MockBackend::MockBackend(MockScript script, uint64_t seed)
    : script_(std::move(script)), seed_(seed) {}

std::string MockBackend::id() const {
  return "mock#" + std::to_string(seed_);
}

std::vector<ModelResponse> MockBackend::chat_complete(const CompletionRequest& req) {
  validate_request(req);
  const std::string transcript = prompt_transcript(req.messages);
  const uint64_t h = fnv1a64(transcript);
  const std::string hex = to_hex(h);

  const MockRule* rule = nullptr;
  for (const MockRule& r : script_.rules) {
    if (!r.match_hash.empty() && r.match_hash == hex) { rule = &r; break; }
    if (!r.match_contains.empty() &&
        transcript.find(r.match_contains) != std::string::npos) {
      rule = &r;
      break;
    }
  }

  const int prompt_tokens = approx_token_count(transcript);
  std::vector<ModelResponse> out;
  out.reserve(req.samples);
  for (int i = 0; i < req.samples; ++i) {
    const int variant = (req.temperature == 0.0) ? 0 : i;
    std::string text;
    std::string finish_override;
    if (rule) {
      if (!rule->responses.empty())
        text = rule->responses[variant % rule->responses.size()];
      finish_override = rule->finish;
    } else if (script_.fallback == "fixed") {
      text = script_.fallback_text;
    } else if (script_.fallback == "none") {
      text = "The reasoning trails off without reaching a verdict";
    } else {
      const std::string& letters = script_.fallback_letters;
      uint64_t draw = splitmix64(h ^ splitmix64(seed_) ^
                                 static_cast<uint64_t>(variant));
      char letter = letters[draw % letters.size()];
      text = std::string("Weighing the options step by step, the answer is (") +
             letter + ").";
    }

    ModelResponse r;
    r.prompt_tokens = prompt_tokens;
    if (finish_override == "error") {
      r.text = text;
      r.finish = FinishReason::error;
      r.completion_tokens = approx_token_count(r.text);
    } else if (approx_token_count(text) > req.max_tokens ||
               finish_override == "length") {
      r.text = truncate_whitespace_tokens(text, req.max_tokens);
      r.finish = FinishReason::length;
      r.completion_tokens = req.max_tokens;
    } else {
      r.text = text;
      r.finish = FinishReason::stop;
      r.completion_tokens = approx_token_count(r.text);
    }
    out.push_back(std::move(r));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string model,
                           HttpEmbedderOptions opts)
    : base_url_(std::move(base_url)), model_(std::move(model)),
      opts_(std::move(opts)) {}

std::vector<double> HttpEmbedder::embed(const std::string& text) const {
  SplitUrl split = split_url(base_url_);
  json body = {{"model", model_}, {"input", json::array({text})}};
  std::string reply_body = post_json_with_retry(
      split.scheme_host, split.path_prefix + "/v1/embeddings", body.dump(),
      opts_.api_key_env, opts_.retry, opts_.timeout_s, "embed");
  json reply;
  try {
    reply = json::parse(reply_body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::protocol_violation,
                std::string("embeddings reply is not valid JSON: ") + e.what());
  }
  if (!reply.contains("data") || !reply["data"].is_array() ||
      reply["data"].empty() || !reply["data"][0].contains("embedding") ||
      !reply["data"][0]["embedding"].is_array())
    throw Error(ErrorCode::protocol_violation,
                "embeddings reply has no data[0].embedding");
  return reply["data"][0]["embedding"].get<std::vector<double>>();
}

}  // namespace medeval
