#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "core/ensemble.hpp"
#include "core/prompt.hpp"
#include "test_util.hpp"

using namespace medeval;
using namespace medeval::testutil;

namespace {

Question make_question(const std::string& id = "q1") {
  Question q;
  q.id = id;
  q.task = TaskTag::medqa;
  q.stem = "Which drug treats headache?";
  q.options = {"aspirin", "insulin", "warfarin", "statin"};
  q.gold = 'A';
  return q;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TEST_CASE("cot flag appends the elicitation sentence to the user turn") {
  PromptConfig cfg;
  cfg.cot = true;
  auto spec = build_prompt(make_question(), cfg, {}, {});
  CHECK(spec.system_instruction.empty());
  CHECK(spec.exemplars.empty());
  auto messages = render_messages(spec);
  REQUIRE(messages.size() == 1);  // empty system text renders no system turn
  CHECK(messages[0].role == Role::user);
  CHECK(ends_with(messages[0].content, kCotInstruction));
}

TEST_CASE("nonempty system instruction renders as the first message") {
  PromptConfig cfg;
  cfg.system_instruction = "You are a careful clinician.";
  auto messages = render_messages(build_prompt(make_question(), cfg, {}, {}));
  REQUIRE(messages.size() == 2);
  CHECK(messages[0].role == Role::system);
  CHECK(messages[0].content == "You are a careful clinician.");
  CHECK(messages[1].role == Role::user);
}

TEST_CASE("exemplars render as alternating user/assistant pairs") {
  PromptConfig cfg;
  cfg.k = 2;
  Question ex1 = make_question("ex1");
  ex1.gold = 'B';
  Question ex2 = make_question("ex2");
  ex2.stem = "Which hormone lowers blood sugar?";
  ex2.gold = 'D';
  Question target = make_question("target");
  target.stem = "Which organ filters blood?";

  auto spec = build_prompt(target, cfg, {ex1, ex2}, {});
  REQUIRE(spec.exemplars.size() == 2);
  CHECK(spec.exemplars[0].worked_answer == "The answer is (B).");
  CHECK(spec.exemplars[1].worked_answer == "The answer is (D).");

  auto messages = render_messages(spec);
  // u, a, u, a, u  (2k + 1 non-system turns)
  REQUIRE(messages.size() == 5);
  CHECK(messages[0].role == Role::user);
  CHECK(messages[1].role == Role::assistant);
  CHECK(messages[2].role == Role::user);
  CHECK(messages[3].role == Role::assistant);
  CHECK(messages[4].role == Role::user);

  std::string transcript = prompt_transcript(messages);
  auto pos1 = transcript.find(ex1.stem);
  auto pos2 = transcript.find(ex2.stem);
  auto pos_target = transcript.find(target.stem);
  REQUIRE(pos1 != std::string::npos);
  REQUIRE(pos2 != std::string::npos);
  REQUIRE(pos_target != std::string::npos);
  CHECK(pos1 < pos2);
  CHECK(pos2 < pos_target);
}

TEST_CASE("config mismatches raise inconsistent_config") {
  PromptConfig cfg;
  cfg.k = 2;
  CHECK(thrown_code([&] { build_prompt(make_question(), cfg, {make_question("e")}, {}); }) ==
        ErrorCode::inconsistent_config);

  PromptConfig no_rag;
  CHECK(thrown_code([&] {
          build_prompt(make_question(), no_rag, {}, {"a paragraph"});
        }) == ErrorCode::inconsistent_config);
}

TEST_CASE("rendering is deterministic") {
  PromptConfig cfg;
  cfg.cot = true;
  cfg.k = 1;
  cfg.retrieval = true;
  auto spec = build_prompt(make_question(), cfg, {make_question("ex")},
                           {"Aspirin inhibits cyclooxygenase."});
  auto a = prompt_transcript(render_messages(spec));
  auto b = prompt_transcript(render_messages(spec));
  CHECK(a == b);
}

TEST_CASE("context paragraphs sit under a Context header before the question") {
  PromptConfig cfg;
  cfg.retrieval = true;
  auto spec = build_prompt(make_question(), cfg, {},
                           {"First paragraph.", "Second paragraph."});
  auto messages = render_messages(spec);
  const std::string& turn = messages.back().content;
  auto ctx = turn.find("Context:\nFirst paragraph.\n\nSecond paragraph.");
  auto stem = turn.find("Question: Which drug treats headache?");
  REQUIRE(ctx != std::string::npos);
  REQUIRE(stem != std::string::npos);
  CHECK(ctx < stem);
  CHECK(turn.find("A. aspirin\nB. insulin\nC. warfarin\nD. statin") !=
        std::string::npos);
}

TEST_CASE("pubmedqa abstract is always included") {
  Question q = make_question();
  q.task = TaskTag::pubmedqa_rr;
  q.context = "Study abstract text.";
  q.options = {"yes", "no", "maybe"};
  auto messages = render_messages(build_prompt(q, {}, {}, {}));
  CHECK(messages.back().content.find("Context:\nStudy abstract text.") !=
        std::string::npos);
}

TEST_CASE("custom templates substitute the named placeholders") {
  PromptConfig cfg;
  cfg.template_text = "Q={stem} O=[{options}]";
  auto messages = render_messages(build_prompt(make_question(), cfg, {}, {}));
  const std::string& turn = messages.back().content;
  CHECK(turn.find("Q=Which drug treats headache?") != std::string::npos);
  CHECK(turn.find("O=[A. aspirin") != std::string::npos);

  // no {context} slot: the context block is prepended instead
  Question q = make_question();
  q.context = "Abstract.";
  auto m2 = render_messages(build_prompt(q, cfg, {}, {}));
  CHECK(m2.back().content.rfind("Context:\nAbstract.", 0) == 0);
}

TEST_CASE("message sequences keep the system-first, user-last shape") {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 100; ++iter) {
    PromptConfig cfg;
    cfg.cot = rng() % 2;
    cfg.k = static_cast<int>(rng() % 3);
    cfg.retrieval = rng() % 2;
    if (rng() % 2) cfg.system_instruction = "sys";
    std::vector<Question> exemplars;
    for (int i = 0; i < cfg.k; ++i)
      exemplars.push_back(make_question("ex" + std::to_string(i)));
    std::vector<std::string> context;
    if (cfg.retrieval && rng() % 2) context.push_back("ctx paragraph");

    auto messages = render_messages(
        build_prompt(make_question(), cfg, exemplars, context));
    REQUIRE(!messages.empty());
    CHECK(messages.back().role == Role::user);
    int system_count = 0;
    for (size_t i = 0; i < messages.size(); ++i) {
      if (messages[i].role == Role::system) {
        ++system_count;
        CHECK(i == 0);
      }
    }
    CHECK(system_count <= 1);
  }
}

TEST_CASE("the target's gold letter never leaks into the rendered prompt") {
  std::mt19937_64 rng(424242);
  for (int iter = 0; iter < 200; ++iter) {
    Question q = make_question("t" + std::to_string(iter));
    q.gold = static_cast<char>('A' + rng() % q.options.size());
    PromptConfig cfg;
    cfg.cot = rng() % 2;
    cfg.k = static_cast<int>(rng() % 3);
    std::vector<Question> exemplars;
    for (int i = 0; i < cfg.k; ++i) {
      Question ex = make_question("ex" + std::to_string(i));
      ex.gold = static_cast<char>('A' + rng() % ex.options.size());
      exemplars.push_back(ex);
    }
    auto messages = render_messages(build_prompt(q, cfg, exemplars, {}));

    // The final user turn must not contain a verdict for the target: the
    // extraction grammar may only ever land on the literal 'X' placeholder,
    // which is not an option letter.
    const std::string& turn = messages.back().content;
    auto letters_vec = q.letters();
    std::set<char> letters(letters_vec.begin(), letters_vec.end());
    auto code = thrown_code([&] { extract_answer(turn, letters); });
    REQUIRE(code.has_value());
    CHECK((*code == ErrorCode::no_answer_found ||
           *code == ErrorCode::letter_out_of_range));
  }
}
