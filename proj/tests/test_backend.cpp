#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "core/backend.hpp"
#include "core/evaluate.hpp"
#include "core/hash.hpp"
#include "test_util.hpp"

using namespace medeval;
using namespace medeval::testutil;
using nlohmann::json;

namespace {

MessageSequence simple_messages(const std::string& text = "What is the dose?") {
  return {{Role::user, text}};
}

CompletionRequest simple_request(int samples = 1, double temperature = 0.0) {
  CompletionRequest req;
  req.messages = simple_messages();
  req.temperature = temperature;
  req.max_tokens = 64;
  req.samples = samples;
  return req;
}

// One-shot local server; handler installed before start().
class TestServer {
 public:
  ~TestServer() { stop(); }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  httplib::Server server_;

 private:
  std::thread thread_;
  int port_ = 0;
};

HttpBackendOptions fast_options(int retries = 0) {
  HttpBackendOptions opts;
  opts.retry.max_retries = retries;
  opts.retry.initial_backoff_ms = 5;
  opts.timeout_s = 5;
  opts.api_key_env = "";
  return opts;
}

}  // namespace

TEST_CASE("mock backend returns identical scripted samples at temperature 0") {
  auto messages = simple_messages();
  MockScript script = MockScript::parse(json{
      {"entries", json::array({{{"match_hash", to_hex(prompt_hash(messages))},
                                {"responses", {"The answer is (B)."}}}})}}
                                            .dump());
  MockBackend backend(script, 7);

  CompletionRequest req = simple_request(5, 0.0);
  auto responses = backend.chat_complete(req);
  REQUIRE(responses.size() == 5);
  for (const auto& r : responses) {
    CHECK(r.text == "The answer is (B).");
    CHECK(r.finish == FinishReason::stop);
    CHECK(r.completion_tokens == 4);
    CHECK(r.prompt_tokens > 0);
  }

  SUBCASE("repeated runs are byte-identical") {
    auto again = backend.chat_complete(req);
    REQUIRE(again.size() == responses.size());
    for (size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].text == responses[i].text);
      CHECK(again[i].completion_tokens == responses[i].completion_tokens);
    }
  }
}

TEST_CASE("mock responses cycle by sample index at temperature > 0") {
  MockScript script = MockScript::parse(json{
      {"entries", json::array({{{"match_contains", "dose"},
                                {"responses", {"Answer: A", "Answer: B"}}}})}}
                                            .dump());
  MockBackend backend(script);
  auto responses = backend.chat_complete(simple_request(4, 0.7));
  REQUIRE(responses.size() == 4);
  CHECK(responses[0].text == "Answer: A");
  CHECK(responses[1].text == "Answer: B");
  CHECK(responses[2].text == "Answer: A");
  CHECK(responses[3].text == "Answer: B");
}

TEST_CASE("mock truncates past max_tokens with finish=length") {
  MockScript script = MockScript::parse(json{
      {"entries",
       json::array({{{"match_contains", "dose"},
                     {"responses", {"one two three four five six seven"}}}})}}
                                            .dump());
  MockBackend backend(script);
  CompletionRequest req = simple_request(1, 0.0);
  req.max_tokens = 3;
  auto responses = backend.chat_complete(req);
  REQUIRE(responses.size() == 1);
  CHECK(responses[0].text == "one two three");
  CHECK(responses[0].finish == FinishReason::length);
  CHECK(responses[0].completion_tokens == 3);  // = max_tokens by contract
}

TEST_CASE("mock honors scripted finish overrides") {
  MockScript script = MockScript::parse(json{
      {"entries", json::array({
                      {{"match_contains", "dose"},
                       {"responses", {"The answer is (A)."}},
                       {"finish", "length"}},
                  })}}.dump());
  MockBackend backend(script);
  auto responses = backend.chat_complete(simple_request(1, 0.0));
  CHECK(responses[0].finish == FinishReason::length);
  CHECK(responses[0].completion_tokens == 64);

  MockScript err_script = MockScript::parse(json{
      {"entries", json::array({
                      {{"match_contains", "dose"}, {"finish", "error"}},
                  })}}.dump());
  MockBackend err_backend(err_script);
  auto errs = err_backend.chat_complete(simple_request(3, 0.7));
  REQUIRE(errs.size() == 3);
  for (const auto& r : errs) {
    CHECK(r.finish == FinishReason::error);
    CHECK(r.text.empty());
  }
}

TEST_CASE("mock fallback modes are deterministic functions of the prompt") {
  SUBCASE("letter fallback") {
    MockBackend a(MockScript{}, 11);
    MockBackend b(MockScript{}, 11);
    auto ra = a.chat_complete(simple_request(4, 0.7));
    auto rb = b.chat_complete(simple_request(4, 0.7));
    for (size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].text == rb[i].text);
    bool any_difference = false;
    for (size_t i = 1; i < ra.size(); ++i)
      any_difference = any_difference || ra[i].text != ra[0].text;
    CHECK(any_difference);  // diversity across sample indices
  }
  SUBCASE("none fallback never yields an extractable answer") {
    MockScript script = MockScript::parse(R"({"fallback": {"mode": "none"}})");
    MockBackend backend(script);
    auto r = backend.chat_complete(simple_request(2, 0.7));
    CHECK(r[0].text.find("answer is (") == std::string::npos);
  }
  SUBCASE("fixed fallback echoes the configured text") {
    MockScript script = MockScript::parse(
        R"({"fallback": {"mode": "fixed", "text": "Answer: C"}})");
    MockBackend backend(script);
    CHECK(backend.chat_complete(simple_request(1, 0.0))[0].text == "Answer: C");
  }
}

TEST_CASE("mock script validation") {
  CHECK(thrown_code([] { MockScript::parse("not json"); }) ==
        ErrorCode::malformed_record);
  CHECK(thrown_code([] { MockScript::parse(R"({"entries": [{}]})"); }) ==
        ErrorCode::malformed_record);
  CHECK(thrown_code([] { MockScript::parse(R"({"fallback": {"mode": "weird"}})"); }) ==
        ErrorCode::malformed_record);
}

TEST_CASE("request validation") {
  MockBackend backend;
  CompletionRequest bad = simple_request();
  bad.samples = 0;
  CHECK(thrown_code([&] { backend.chat_complete(bad); }) == ErrorCode::invalid_argument);
  bad = simple_request();
  bad.max_tokens = 0;
  CHECK(thrown_code([&] { backend.chat_complete(bad); }) == ErrorCode::invalid_argument);
}

TEST_CASE("http backend round-trips the wire format") {
  TestServer server;
  json captured_body;
  std::string captured_auth;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request& req, httplib::Response& res) {
                        captured_body = json::parse(req.body);
                        captured_auth = req.get_header_value("Authorization");
                        json reply = {
                            {"choices",
                             json::array(
                                 {{{"message", {{"content", "The answer is (C)."}}},
                                   {"finish_reason", "stop"}}})},
                            {"usage",
                             {{"prompt_tokens", 42}, {"completion_tokens", 9}}}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();

  ::setenv("MEDEVAL_TEST_KEY", "sk-123", 1);
  HttpBackendOptions opts = fast_options();
  opts.api_key_env = "MEDEVAL_TEST_KEY";
  HttpBackend backend(server.url(), "demo-model", opts);

  CompletionRequest req = simple_request(1, 0.3);
  auto responses = backend.chat_complete(req);
  REQUIRE(responses.size() == 1);
  CHECK(responses[0].text == "The answer is (C).");
  CHECK(responses[0].finish == FinishReason::stop);
  CHECK(responses[0].prompt_tokens == 42);
  CHECK(responses[0].completion_tokens == 9);
  CHECK_FALSE(responses[0].usage_approximate);

  CHECK(captured_body["model"] == "demo-model");
  CHECK(captured_body["n"] == 1);
  CHECK(captured_body["temperature"] == doctest::Approx(0.3));
  CHECK(captured_body["max_tokens"] == 64);
  REQUIRE(captured_body["messages"].is_array());
  CHECK(captured_body["messages"][0]["role"] == "user");
  CHECK(captured_body["messages"][0]["content"] == "What is the dose?");
  CHECK(captured_auth == "Bearer sk-123");
}

TEST_CASE("http backend flags per-sample counts as approximate when n > 1") {
  TestServer server;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        json reply = {
                            {"choices",
                             json::array({{{"message", {{"content", "Answer: A"}}},
                                           {"finish_reason", "stop"}},
                                          {{"message", {{"content", "Answer: B idk"}}},
                                           {"finish_reason", "stop"}}})},
                            {"usage",
                             {{"prompt_tokens", 10}, {"completion_tokens", 5}}}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options());
  auto responses = backend.chat_complete(simple_request(2, 0.7));
  REQUIRE(responses.size() == 2);
  CHECK(responses[0].prompt_tokens == 10);
  CHECK(responses[0].usage_approximate);       // aggregate usage, so flagged
  CHECK(responses[0].completion_tokens == 2);  // whitespace count
  CHECK(responses[1].completion_tokens == 3);
}

TEST_CASE("http backend pads missing choices with error slots") {
  TestServer server;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        json reply = {
                            {"choices",
                             json::array({{{"message", {{"content", "Answer: A"}}},
                                           {"finish_reason", "stop"}}})}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options());
  auto responses = backend.chat_complete(simple_request(3, 0.7));
  REQUIRE(responses.size() == 3);  // never drops a slot
  CHECK(responses[0].finish == FinishReason::stop);
  CHECK(responses[1].finish == FinishReason::error);
  CHECK(responses[2].finish == FinishReason::error);
  CHECK(responses[0].usage_approximate);  // no usage in the reply
}

TEST_CASE("http backend normalizes finish=length to the token cap") {
  TestServer server;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        json reply = {
                            {"choices",
                             json::array({{{"message", {{"content", "truncated mid"}}},
                                           {"finish_reason", "length"}}})},
                            {"usage",
                             {{"prompt_tokens", 5}, {"completion_tokens", 64}}}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options());
  auto responses = backend.chat_complete(simple_request(1, 0.0));
  CHECK(responses[0].finish == FinishReason::length);
  CHECK(responses[0].completion_tokens == 64);  // == max_tokens
}

TEST_CASE("http backend raises protocol_violation on malformed replies") {
  TestServer server;
  int mode = 0;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        if (mode == 0) res.set_content("not json at all", "text/plain");
                        else res.set_content(R"({"no_choices": true})", "application/json");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options());
  CHECK(thrown_code([&] { backend.chat_complete(simple_request()); }) ==
        ErrorCode::protocol_violation);
  mode = 1;
  CHECK(thrown_code([&] { backend.chat_complete(simple_request()); }) ==
        ErrorCode::protocol_violation);
}

TEST_CASE("http backend treats client errors as protocol violations") {
  TestServer server;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        res.status = 404;
                        res.set_content("nope", "text/plain");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options(3));
  auto msg = thrown_message([&] { backend.chat_complete(simple_request()); });
  CHECK(msg.find("404") != std::string::npos);
}

TEST_CASE("http backend retries transient failures with backoff") {
  TestServer server;
  std::atomic<int> attempts{0};
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request&, httplib::Response& res) {
                        if (attempts.fetch_add(1) < 2) {
                          res.status = 500;
                          res.set_content("overloaded", "text/plain");
                          return;
                        }
                        json reply = {
                            {"choices",
                             json::array({{{"message", {{"content", "Answer: B"}}},
                                           {"finish_reason", "stop"}}})}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();
  HttpBackend backend(server.url(), "m", fast_options(3));
  auto responses = backend.chat_complete(simple_request());
  CHECK(responses[0].text == "Answer: B");
  CHECK(attempts.load() == 3);  // two failures, then success
}

TEST_CASE("http backend exhausts retries into backend_unreachable") {
  SUBCASE("persistent 5xx") {
    TestServer server;
    std::atomic<int> attempts{0};
    server.server_.Post("/v1/chat/completions",
                        [&](const httplib::Request&, httplib::Response& res) {
                          attempts.fetch_add(1);
                          res.status = 503;
                        });
    server.start();
    HttpBackend backend(server.url(), "m", fast_options(2));
    CHECK(thrown_code([&] { backend.chat_complete(simple_request()); }) ==
          ErrorCode::backend_unreachable);
    CHECK(attempts.load() == 3);  // 1 + 2 retries
  }
  SUBCASE("connection refused") {
    HttpBackend backend("http://127.0.0.1:9", "m", fast_options(1));
    CHECK(thrown_code([&] { backend.chat_complete(simple_request()); }) ==
          ErrorCode::backend_unreachable);
  }
}

TEST_CASE("evaluate_task runs over a live http backend") {
  TestServer server;
  server.server_.Post("/v1/chat/completions",
                      [&](const httplib::Request& req, httplib::Response& res) {
                        json body = json::parse(req.body);
                        std::string prompt = body["messages"].back()["content"];
                        const char* verdict =
                            prompt.find("Pick B") != std::string::npos ? "B" : "C";
                        json choices = json::array();
                        for (int i = 0; i < body["n"].get<int>(); ++i)
                          choices.push_back(
                              {{"message",
                                {{"content",
                                  std::string("The answer is (") + verdict + ")."}}},
                               {"finish_reason", "stop"}});
                        json reply = {{"choices", choices},
                                      {"usage",
                                       {{"prompt_tokens", 30},
                                        {"completion_tokens", 4}}}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();

  std::vector<Question> questions;
  for (const char* stem : {"Pick B please", "Pick A please"}) {
    Question q;
    q.id = stem;
    q.task = TaskTag::medqa;
    q.stem = stem;
    q.options = {"w", "x", "y", "z"};
    q.gold = 'B';
    questions.push_back(q);
  }

  HttpBackend backend(server.url(), "m", fast_options(1));
  EvalOptions opts;
  opts.base.n = 3;
  opts.base.temperature = 0.7;
  opts.parallelism = 2;
  auto report = evaluate_task(questions, opts, backend);
  CHECK(report.n_questions == 2);
  CHECK(report.accuracy_strict == doctest::Approx(0.5));  // q2 answered C
  CHECK(report.records[0].responses.size() == 3);
  CHECK(report.usage_approximate);  // n > 1, per-sample counts approximated
}

TEST_CASE("http embedder fetches vectors") {
  TestServer server;
  server.server_.Post("/v1/embeddings",
                      [&](const httplib::Request& req, httplib::Response& res) {
                        json body = json::parse(req.body);
                        CHECK(body["input"].is_array());
                        json reply = {
                            {"data", json::array({{{"embedding", {0.1, 0.2, 0.3}}}})}};
                        res.set_content(reply.dump(), "application/json");
                      });
  server.start();
  HttpEmbedderOptions opts;
  opts.retry.max_retries = 0;
  opts.retry.initial_backoff_ms = 5;
  opts.api_key_env = "";
  HttpEmbedder embedder(server.url(), "embed-model", opts);
  auto vec = embedder.embed("some question");
  REQUIRE(vec.size() == 3);
  CHECK(vec[2] == doctest::Approx(0.3));
}
