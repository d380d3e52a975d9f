#include <doctest.h>

#include <regex>

#include "smartcourse/advisor.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"
#include "smartcourse/notify.hpp"
#include "support.hpp"

using namespace smartcourse;
using namespace smartcourse::advisor;
using testsupport::TempDir;
using testsupport::uniform;

namespace {

std::vector<std::string> regex_oracle(const std::string& text) {
  static const std::regex re(R"(\b([A-Za-z]{2,4})[ -]?([0-9]{3,4})\b)");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    std::string dept = (*it)[1];
    for (auto& c : dept) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    std::string code = dept + " " + std::string((*it)[2]);
    if (seen.insert(code).second) out.push_back(code);
  }
  return out;
}

std::string random_reply() {
  static const std::vector<std::string> atoms = {
      "CPS", "cps", "Math", "ID", "X", "ABCDE", "1231", "123", "12", "12345", "4801", " ", " ", "-", "_",
      ".", ",", "(", ")", "\n", "\xC3\xA9", "take", "A", "9", "0", "CPS-", "MATH2415", "Ph.D."};
  std::string out;
  for (int n = uniform(0, 24); n > 0; --n) out += atoms[static_cast<std::size_t>(uniform(0, static_cast<int>(atoms.size()) - 1))];
  return out;
}

struct RecordingSink : notify::EventSink {
  std::vector<notify::NotificationEvent> events;
  void publish(const notify::NotificationEvent& e) override { events.push_back(e); }
};

academics::ProgressSnapshot small_snapshot() {
  academics::ProgressSnapshot s;
  s.username = "a";
  s.completed = {{"CPS 1231", Grade::A}, {"CPS 1232", Grade::C}};
  s.outstanding = {"CPS 2231"};
  s.low_grade = {"CPS 1232"};
  return s;
}

store::DegreePlan small_plan() { return {"CPS", {{1, "CPS 1231"}, {1, "CPS 1232"}, {2, "CPS 2231"}}}; }

}  // namespace

TEST_CASE("prompt layout per mode") {
  auto snap = small_snapshot();
  auto plan = small_plan();
  auto full = build_prompt("  What next?  ", snap, plan, ContextMode::Full).text;
  CHECK(full.starts_with(std::string(kInstruction)));
  CHECK(full.find("### TRANSCRIPT\nCPS 1231 A\nCPS 1232 C\n\n") != std::string::npos);
  CHECK(full.find("### PLAN\n1 CPS 1231\n1 CPS 1232\n2 CPS 2231\n\n") != std::string::npos);
  CHECK(full.ends_with("### QUESTION\nWhat next?\n"));

  auto question = build_prompt("What next?", snap, plan, ContextMode::QuestionOnly).text;
  CHECK(question.find("### TRANSCRIPT") == std::string::npos);
  CHECK(question.find("### PLAN") == std::string::npos);
  CHECK(question.find("CPS 1232") == std::string::npos);
  CHECK(question.find("What next?") != std::string::npos);

  CHECK_THROWS_AS(build_prompt(" \n\t", snap, plan, ContextMode::Full), Error);

  academics::ProgressSnapshot empty;
  auto blank = build_prompt("Q", empty, store::DegreePlan{"CPS", {}}, ContextMode::Full).text;
  CHECK(blank.find("(no completed courses)") != std::string::npos);
  CHECK(blank.find("(no plan requirements)") != std::string::npos);
}

TEST_CASE("every ablated prompt is the full prompt minus whole sections") {
  auto snap = small_snapshot();
  auto plan = small_plan();
  auto full = build_prompt("Q?", snap, plan, ContextMode::Full).text;
  auto block = [&](std::string_view header) {
    auto start = full.find(header);
    auto end = full.find("\n\n", start);
    return full.substr(start, end + 2 - start);
  };
  auto remove = [](std::string text, const std::string& part) {
    auto pos = text.find(part);
    REQUIRE(pos != std::string::npos);
    return text.erase(pos, part.size());
  };
  auto transcript = block(kTranscriptHeader);
  auto plan_block = block(kPlanHeader);
  CHECK(build_prompt("Q?", snap, plan, ContextMode::NoTranscript).text == remove(full, transcript));
  CHECK(build_prompt("Q?", snap, plan, ContextMode::NoPlan).text == remove(full, plan_block));
  CHECK(build_prompt("Q?", snap, plan, ContextMode::QuestionOnly).text == remove(remove(full, transcript), plan_block));
}

TEST_CASE("prompt sections parse back") {
  auto p = build_prompt("Which electives?", small_snapshot(), small_plan(), ContextMode::Full).text;
  auto s = parse_prompt_sections(p);
  CHECK(s.has_transcript);
  CHECK(s.has_plan);
  CHECK(s.has_question);
  CHECK(s.question == "Which electives?");
  REQUIRE(s.transcript.size() == 2);
  CHECK(s.transcript[1] == std::pair<std::string, std::string>{"CPS 1232", "C"});
  CHECK(s.plan == std::vector<std::string>{"CPS 1231", "CPS 1232", "CPS 2231"});
}

TEST_CASE("extraction matches a std::regex oracle on random text") {
  for (int i = 0; i < 3000; ++i) {
    auto text = random_reply();
    CHECK_MESSAGE(extract_codes(text) == regex_oracle(text), text);
  }
}

TEST_CASE("extraction on a labeled reply corpus") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> corpus = {
      {"Take CPS 3440 next.", {"CPS 3440"}},
      {"I suggest cps3440 and CPS-3500.", {"CPS 3440", "CPS 3500"}},
      {"Consider MATH 2415, MATH 2416 and MATH 2415 again.", {"MATH 2415", "MATH 2416"}},
      {"No course codes here at all.", {}},
      {"", {}},
      {"Retake ID 1225 (Critical Issues).", {"ID 1225"}},
      {"ABCDE 1234 is too long a prefix.", {}},
      {"CPS 12345 has too many digits.", {}},
      {"CPS 12 has too few.", {}},
      {"ABXCPS1231 glued to letters.", {}},
      {"1CPS 1231 glued to a digit.", {}},
      {"_CPS 1231 glued to an underscore.", {}},
      {"CPS 1231x has a trailing letter.", {}},
      {"(CPS 4801), [CPS 4745]; CPS 4882.", {"CPS 4801", "CPS 4745", "CPS 4882"}},
      {"Options:\n- CPS 4150\n- CPS 4222\n", {"CPS 4150", "CPS 4222"}},
      {"Take GE 100 or ge-1000.", {"GE 100", "GE 1000"}},
      {"Plan for 2025 and beyond.", {"FOR 2025"}},
      {"CPS  1231 has two spaces.", {}},
      {"Try caf\xC3\xA9 CPS 2231.", {"CPS 2231"}},
      {"CPS 3440/CPS 3410 both work.", {"CPS 3440", "CPS 3410"}},
  };
  for (const auto& [text, expected] : corpus) {
    CHECK_MESSAGE(extract_codes(text) == expected, text);
    CHECK(regex_oracle(text) == expected);
  }
}

TEST_CASE("catalog filter keeps exactly the catalog members, in reply order") {
  std::vector<store::Course> catalog = {{"CPS 1231", "a", 3}, {"CPS 3440", "b", 3}, {"MATH 2415", "c", 3}};
  std::vector<std::string> universe = {"CPS 1231", "CPS 3440", "MATH 2415", "ZZZ 9999", "QQQ 1234", "CPS 9999"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::string> candidates;
    for (int n = uniform(0, 8); n > 0; --n) candidates.push_back(universe[static_cast<std::size_t>(uniform(0, 5))]);
    auto rec = filter_against_catalog(candidates, catalog);
    std::vector<std::string> kept, removed;
    std::set<std::string> seen;
    for (const auto& c : candidates) {
      bool member = std::any_of(catalog.begin(), catalog.end(), [&](const auto& x) { return x.code == c; });
      if (!member) removed.push_back(c);
      else if (seen.insert(c).second) kept.push_back(c);
    }
    CHECK(rec.codes == kept);
    CHECK(rec.removed == removed);
  }
}

TEST_CASE("question hash is the first 16 hex digits of SHA-256") {
  // sha256("Which electives?") computed with Python hashlib.
  CHECK(question_hash("Which electives?") == "4bd7981ac019122a");
  CHECK(question_hash("") == "e3b0c44298fc1c14");
}

TEST_CASE("history line format") {
  std::vector<std::string> codes = {"CPS 3440", "CPS 3500"};
  auto line = format_history_line("2026-01-02T03:04:05Z", "alice", ContextMode::NoPlan, "Q", codes, 1.23456);
  auto f = io::split(line, '|');
  REQUIRE(f.size() == 6);
  CHECK(f[0] == "2026-01-02T03:04:05Z");
  CHECK(f[1] == "alice");
  CHECK(f[2] == "noPlan");
  CHECK(f[3] == question_hash("Q"));
  CHECK(f[4] == "CPS 3440,CPS 3500");
  CHECK(f[5] == "1.235");
}

TEST_CASE("mode-sensitive stub responds to the context it is given") {
  auto snap = small_snapshot();
  auto plan = small_plan();
  auto full = extract_codes(mode_sensitive_reply(build_prompt("q1", snap, plan, ContextMode::Full).text));
  CHECK(std::find(full.begin(), full.end(), "CPS 2231") != full.end());
  auto no_plan = extract_codes(mode_sensitive_reply(build_prompt("q1", snap, plan, ContextMode::NoPlan).text));
  CHECK(std::find(no_plan.begin(), no_plan.end(), "CPS 2231") == no_plan.end());
  CHECK(std::find(no_plan.begin(), no_plan.end(), "CPS 1232") != no_plan.end());
  auto bare = mode_sensitive_reply(build_prompt("q1", snap, plan, ContextMode::QuestionOnly).text);
  CHECK(bare.find("CPS") == std::string::npos);
}

TEST_CASE("advise runs the whole pipeline and records history") {
  TempDir dir;
  auto cfg = testsupport::fixture_config(dir.path());
  store::Store s(cfg.store);
  ModelSettings settings(cfg.advisor);
  RecordingSink sink;
  ScriptedRuntime runtime([](const std::string&) { return std::string("Take CPS 3440, cps-3410, ZZZ 9999 and CPS 1231."); });
  Advisor advisor(s, runtime, settings, &sink);

  auto rec = advisor.advise("alice", "Which electives?", ContextMode::Full);
  CHECK(rec.codes == std::vector<std::string>{"CPS 3440", "CPS 3410", "CPS 1231"});
  CHECK(rec.removed == std::vector<std::string>{"ZZZ 9999"});
  CHECK(rec.mode == ContextMode::Full);
  CHECK(rec.prompt_text.find("### TRANSCRIPT") != std::string::npos);
  CHECK(rec.source_reply.latency_seconds >= 0.0);

  auto history = s.history_lines();
  REQUIRE(history.size() == 1);
  auto f = io::split(history[0], '|');
  REQUIRE(f.size() == 6);
  CHECK(f[1] == "alice");
  CHECK(f[2] == "full");
  CHECK(f[4] == "CPS 3440,CPS 3410,CPS 1231");
  REQUIRE(sink.events.size() == 1);
  CHECK(sink.events[0].kind == notify::EventKind::NewRecommendation);

  AdviseOptions quiet;
  quiet.record_history = false;
  quiet.notify = false;
  advisor.advise("alice", "Again?", ContextMode::QuestionOnly, quiet);
  CHECK(s.history_lines().size() == 1);
  CHECK(sink.events.size() == 1);

  auto expect = [](auto fn, Errc code) {
    try {
      fn();
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(errc_name(e.code()) == errc_name(code));
    }
  };
  expect([&] { advisor.advise("alice", "   ", ContextMode::Full); }, Errc::EmptyQuestion);
  expect([&] { advisor.advise("prof", "Q", ContextMode::Full); }, Errc::UnknownStudent);
  expect([&] { advisor.advise("ghost", "Q", ContextMode::Full); }, Errc::UnknownStudent);
}

TEST_CASE("advise propagates runtime failures without writing history") {
  TempDir dir;
  auto cfg = testsupport::fixture_config(dir.path());
  store::Store s(cfg.store);
  ModelSettings settings(cfg.advisor);
  auto runtime = make_runtime("stub:unavailable");
  Advisor advisor(s, *runtime, settings);
  try {
    advisor.advise("alice", "Q", ContextMode::Full);
    FAIL("expected RuntimeUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::RuntimeUnavailable);
  }
  CHECK(s.history_lines().empty());
}

TEST_CASE("model switches apply to the next call") {
  TempDir dir;
  auto cfg = testsupport::fixture_config(dir.path());
  store::Store s(cfg.store);
  ModelSettings settings(cfg.advisor);
  std::vector<std::string> seen;
  struct Spy : LlmRuntime {
    std::vector<std::string>* seen;
    std::string complete(const std::string&, const AdvisorConfig& c) override {
      seen->push_back(c.model_name);
      return "CPS 3440";
    }
    std::string describe() const override { return "spy"; }
  } spy;
  spy.seen = &seen;
  Advisor advisor(s, spy, settings);
  advisor.advise("alice", "Q", ContextMode::Full);
  settings.set_model("other-model");
  advisor.advise("alice", "Q", ContextMode::Full);
  CHECK(seen == std::vector<std::string>{std::string(kDefaultModel), "other-model"});
}

TEST_CASE("runtime locators") {
  CHECK(make_runtime("stub:mode-sensitive")->describe() == "stub:mode-sensitive");
  CHECK(make_runtime("http://127.0.0.1:1/api/generate")->describe() == "http://127.0.0.1:1/api/generate");
  CHECK(make_runtime("exec:cat")->describe() == "exec:cat");
  CHECK_THROWS_AS(make_runtime("ftp://x"), Error);
  CHECK_THROWS_AS(make_runtime("stub:nonsense"), Error);
  auto parrot = make_runtime("stub:plan-parrot", {"CPS 1231", "CPS 1232"});
  AdvisorConfig cfg;
  CHECK(extract_codes(parrot->complete("anything", cfg)) == std::vector<std::string>{"CPS 1231", "CPS 1232"});
  CHECK(make_runtime("stub:silent")->complete("x", cfg).empty());
  CHECK(make_runtime("stub:fixed:Take CPS 1231")->complete("x", cfg) == "Take CPS 1231");
}
