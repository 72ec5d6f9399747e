#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "core/prompt.hpp"

namespace medeval {

enum class FinishReason { stop, length, error };

const char* finish_reason_name(FinishReason f);
FinishReason parse_finish_reason(std::string_view name);

struct CompletionRequest {
  MessageSequence messages;
  double temperature = 0.7;
  int max_tokens = 1024;
  int samples = 1;     // n
  uint64_t seed = 0;   // consumed by the mock backend only
};

struct ModelResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  FinishReason finish = FinishReason::stop;
  bool usage_approximate = false;
};

// Uniform chat-completion contract. chat_complete returns exactly
// req.samples responses; per-slot failures come back with finish=error,
// never a dropped slot. Implementations must be safe to call from many
// threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::vector<ModelResponse> chat_complete(const CompletionRequest& req) = 0;
  virtual std::string id() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;  // retries after the first attempt
  int initial_backoff_ms = 500;
  double backoff_multiplier = 2.0;
};

struct HttpBackendOptions {
  std::string api_key_env = "MEDEVAL_API_KEY";
  RetryPolicy retry;
  int timeout_s = 120;
};

// POSTs {model, messages, temperature, max_tokens, n} to
// <base>/v1/chat/completions. Transient transport failures and 429/5xx are
// retried with exponential backoff; exhaustion raises backend_unreachable,
// malformed replies raise protocol_violation.
class HttpBackend : public Backend {
 public:
  HttpBackend(std::string base_url, std::string model,
              HttpBackendOptions opts = {});
  std::vector<ModelResponse> chat_complete(const CompletionRequest& req) override;
  std::string id() const override;

 private:
  std::string scheme_host_;
  std::string path_prefix_;
  std::string base_url_;
  std::string model_;
  HttpBackendOptions opts_;
};

struct MockRule {
  std::string match_hash;      // hex fnv1a64 of the prompt transcript
  std::string match_contains;  // substring of the transcript
  std::vector<std::string> responses;  // cycled by sample index
  std::string finish;          // "" | "stop" | "length" | "error"
};

struct MockScript {
  std::vector<MockRule> rules;
  std::string fallback = "letter";  // letter | fixed | none
  std::string fallback_text;
  std::string fallback_letters = "ABCD";

  static MockScript parse(const std::string& json_text);
  static MockScript load(const std::string& path);
};

// Pure function of (prompt transcript, sample index, seed); at temperature 0
// every sample returns the first scripted response.
class MockBackend : public Backend {
 public:
  explicit MockBackend(MockScript script = {}, uint64_t seed = 0);
  std::vector<ModelResponse> chat_complete(const CompletionRequest& req) override;
  std::string id() const override;

 private:
  MockScript script_;
  uint64_t seed_;
};

uint64_t prompt_hash(const MessageSequence& messages);

struct HttpEmbedderOptions {
  std::string api_key_env = "MEDEVAL_API_KEY";
  RetryPolicy retry;
  int timeout_s = 120;
};

// POSTs {model, input: [text]} to <base>/v1/embeddings.
class HttpEmbedder {
 public:
  HttpEmbedder(std::string base_url, std::string model,
               HttpEmbedderOptions opts = {});
  std::vector<double> embed(const std::string& text) const;

 private:
  std::string base_url_;
  std::string model_;
  HttpEmbedderOptions opts_;
};

}  // namespace medeval
