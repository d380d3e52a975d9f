#include "smartcourse/advisor.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"
#include "smartcourse/notify.hpp"

namespace smartcourse::advisor {

namespace {

bool is_word_char(char c) noexcept {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_alpha(char c) noexcept { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

std::string join(std::span<const std::string> items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

// prompt ------------------------------------------------------------------

AdvisingPrompt build_prompt(std::string_view question, const academics::ProgressSnapshot& snapshot,
                            const store::DegreePlan& plan, ContextMode mode) {
  auto q = io::trim(question);
  if (q.empty()) throw Error(Errc::EmptyQuestion, "question must be non-empty");

  std::string text(kInstruction);
  text += "\n\n";
  if (includes_transcript(mode)) {
    text += kTranscriptHeader;
    text += "\n";
    if (snapshot.completed.empty()) text += "(no completed courses)\n";
    for (const auto& t : snapshot.completed) text += t.code + " " + std::string(grade_symbol(t.grade)) + "\n";
    text += "\n";
  }
  if (includes_plan(mode)) {
    text += kPlanHeader;
    text += "\n";
    if (plan.entries.empty()) text += "(no plan requirements)\n";
    for (const auto& e : plan.entries) text += std::to_string(e.year) + " " + e.code + "\n";
    text += "\n";
  }
  text += kQuestionHeader;
  text += "\n";
  text += q;
  text += "\n";
  return {std::move(text), mode};
}

PromptSections parse_prompt_sections(std::string_view prompt) {
  PromptSections out;
  enum class Sec { None, Transcript, Plan, Question } sec = Sec::None;
  for (const auto& raw : io::split(prompt, '\n')) {
    std::string_view line = raw;
    if (line == kTranscriptHeader) {
      sec = Sec::Transcript;
      out.has_transcript = true;
    } else if (line == kPlanHeader) {
      sec = Sec::Plan;
      out.has_plan = true;
    } else if (line == kQuestionHeader) {
      sec = Sec::Question;
      out.has_question = true;
    } else if (sec == Sec::Question) {
      if (!out.question.empty()) out.question += "\n";
      out.question += line;
    } else if (!line.empty() && sec == Sec::Transcript) {
      auto sp = line.rfind(' ');
      if (sp != std::string_view::npos)
        out.transcript.emplace_back(std::string(line.substr(0, sp)), std::string(line.substr(sp + 1)));
    } else if (!line.empty() && sec == Sec::Plan) {
      auto sp = line.find(' ');
      if (sp != std::string_view::npos) out.plan.emplace_back(line.substr(sp + 1));
    }
  }
  out.question = std::string(io::trim(out.question));
  return out;
}

// extraction / filtering --------------------------------------------------

std::vector<std::string> extract_codes(std::string_view text) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_alpha(text[i]) || (i > 0 && is_word_char(text[i - 1]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_alpha(text[j])) ++j;
    std::size_t letters = j - i;
    if (letters >= 2 && letters <= 4) {
      std::size_t k = j;
      if (k < n && (text[k] == ' ' || text[k] == '-')) ++k;
      std::size_t d = k;
      while (d < n && is_digit(text[d])) ++d;
      std::size_t digits = d - k;
      if (digits >= 3 && digits <= 4 && (d == n || !is_word_char(text[d]))) {
        std::string code;
        for (std::size_t p = i; p < j; ++p) code.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text[p]))));
        code.push_back(' ');
        code.append(text.substr(k, digits));
        if (seen.insert(code).second) out.push_back(std::move(code));
        i = d;
        continue;
      }
    }
    i = j;
  }
  return out;
}

RecommendationSet filter_against_catalog(std::span<const std::string> candidates,
                                         std::span<const store::Course> catalog) {
  std::set<std::string> known;
  for (const auto& c : catalog) known.insert(c.code);
  RecommendationSet out;
  std::set<std::string> kept;
  for (const auto& code : candidates) {
    if (known.contains(code)) {
      if (kept.insert(code).second) out.codes.push_back(code);
    } else {
      spdlog::info("dropped recommendation {}: hallucinated/off-catalog", code);
      out.removed.push_back(code);
    }
  }
  return out;
}

// runtime plumbing --------------------------------------------------------

ScriptedRuntime::ScriptedRuntime(Script script, std::chrono::milliseconds delay, std::string name)
    : script_(std::move(script)), delay_(delay), name_(std::move(name)) {}

std::string ScriptedRuntime::complete(const std::string& prompt, const AdvisorConfig& cfg) {
  if (delay_.count() > 0) {
    auto limit = std::chrono::duration<double>(cfg.timeout_seconds);
    if (delay_ > limit) {
      std::this_thread::sleep_for(limit);
      throw Error(Errc::Timeout, "scripted runtime exceeded timeout");
    }
    std::this_thread::sleep_for(delay_);
  }
  return script_(prompt);
}

std::string mode_sensitive_reply(const std::string& prompt) {
  auto sections = parse_prompt_sections(prompt);
  std::uint64_t h = fnv1a(sections.question);
  std::ostringstream out;

  std::vector<std::string> retakes;
  std::set<std::string> taken;
  academics::GradePolicy policy;
  for (const auto& [code, symbol] : sections.transcript) {
    taken.insert(code);
    if (auto g = parse_grade(symbol); g && policy.is_low(*g)) retakes.push_back(code);
  }

  if (!sections.has_transcript && !sections.has_plan) {
    // Bare question: generic advice, sometimes naming an invented course.
    out << "Choose courses that match your interests and career goals, and talk with your advisor about "
           "your schedule for 2025.";
    if (h % 3 == 0) out << " A course like ZZZ 9999 could also help.";
    return out.str();
  }

  std::vector<std::string> picks;
  if (sections.has_plan) {
    std::vector<std::string> pool;
    for (const auto& code : sections.plan)
      if (!taken.contains(code)) pool.push_back(code);
    if (!pool.empty()) {
      std::size_t k = std::min<std::size_t>(pool.size(), 3 + h % 4);
      std::size_t offset = (h / 7) % pool.size();
      for (std::size_t i = 0; i < k; ++i) picks.push_back(pool[(offset + i) % pool.size()]);
    }
  }
  if (!picks.empty()) {
    out << "Based on your degree plan, consider taking ";
    out << join(picks, ", ") << " next semester to stay on track.";
  }
  if (!retakes.empty()) {
    std::size_t k = std::min<std::size_t>(retakes.size(), 1 + h % 3);
    std::vector<std::string> chosen(retakes.begin(), retakes.begin() + static_cast<std::ptrdiff_t>(k));
    out << (picks.empty() ? "" : " ") << "You might also retake " << join(chosen, " and ")
        << " to strengthen your GPA.";
  }
  if (picks.empty() && retakes.empty()) out << "Your record looks solid; pick electives that interest you.";
  if (h % 5 == 0) out << " Some students also enjoy QQQ 1234.";
  return out.str();
}

std::unique_ptr<LlmRuntime> make_runtime(std::string_view locator, std::vector<std::string> parrot_codes) {
  if (locator.starts_with("http://") || locator.starts_with("https://"))
    return std::make_unique<HttpRuntime>(std::string(locator));
  if (locator.starts_with("exec:")) return std::make_unique<ProcessRuntime>(std::string(locator.substr(5)));
  if (!locator.starts_with("stub:"))
    throw Error(Errc::ConfigError, "unknown runtime locator '" + std::string(locator) + "'");

  auto name = locator.substr(5);
  if (name == "mode-sensitive")
    return std::make_unique<ScriptedRuntime>(mode_sensitive_reply, std::chrono::milliseconds{}, "mode-sensitive");
  if (name == "silent")
    return std::make_unique<ScriptedRuntime>([](const std::string&) { return std::string{}; },
                                             std::chrono::milliseconds{}, "silent");
  if (name == "plan-parrot") {
    std::string reply = "Take " + join(parrot_codes, ", ") + ".";
    return std::make_unique<ScriptedRuntime>([reply](const std::string&) { return reply; },
                                             std::chrono::milliseconds{}, "plan-parrot");
  }
  if (name == "unavailable")
    return std::make_unique<ScriptedRuntime>(
        [](const std::string&) -> std::string { throw Error(Errc::RuntimeUnavailable, "stub runtime is offline"); },
        std::chrono::milliseconds{}, "unavailable");
  if (name.starts_with("sleep:")) {
    int ms = 0;
    auto digits = name.substr(6);
    std::from_chars(digits.data(), digits.data() + digits.size(), ms);
    return std::make_unique<ScriptedRuntime>([](const std::string&) { return std::string("Take CPS 3440."); },
                                             std::chrono::milliseconds(ms), std::string(name));
  }
  if (name.starts_with("fixed:")) {
    std::string reply(name.substr(6));
    return std::make_unique<ScriptedRuntime>([reply](const std::string&) { return reply; },
                                             std::chrono::milliseconds{}, "fixed");
  }
  throw Error(Errc::ConfigError, "unknown stub runtime '" + std::string(name) + "'");
}

RawReply invoke_llm(LlmRuntime& runtime, const AdvisingPrompt& prompt, const AdvisorConfig& cfg) {
  if (!(cfg.timeout_seconds > 0)) throw Error(Errc::ConfigError, "timeout_seconds must be positive");
  auto start = std::chrono::steady_clock::now();
  std::string text = runtime.complete(prompt.text, cfg);
  std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  if (io::trim(text).empty()) spdlog::info("runtime {} returned an empty reply", runtime.describe());
  return {std::move(text), std::max(0.0, elapsed.count())};
}

// history -----------------------------------------------------------------

std::string question_hash(std::string_view question) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(question.data(), question.size(), out, &len, EVP_sha256(), nullptr);
  return io::to_hex(std::string_view(reinterpret_cast<const char*>(out), len)).substr(0, 16);
}

std::string format_history_line(std::string_view timestamp, std::string_view username, ContextMode mode,
                                std::string_view question, std::span<const std::string> codes, double latency) {
  char lat[32];
  std::snprintf(lat, sizeof lat, "%.3f", latency);
  std::string line;
  line.append(timestamp).append("|").append(username).append("|").append(mode_name(mode)).append("|");
  line.append(question_hash(question)).append("|").append(join(codes, ",")).append("|").append(lat);
  return line;
}

// advise ------------------------------------------------------------------

Advisor::Advisor(store::Store& store, LlmRuntime& runtime, ModelSettings& settings, notify::EventSink* sink)
    : store_(store), runtime_(runtime), settings_(settings), sink_(sink) {}

RecommendationSet Advisor::advise(std::string_view username, std::string_view question, ContextMode mode,
                                  const AdviseOptions& options) {
  if (io::trim(question).empty()) throw Error(Errc::EmptyQuestion, "question must be non-empty");
  auto account = store_.find_account(username);
  if (!account || account->role != store::Role::Student)
    throw Error(Errc::UnknownStudent, "no student '" + std::string(username) + "'");
  auto plan = store_.load_plan(account->major);
  auto snapshot = academics::compute_progress(account->username, store_.ledger_for(account->username), plan,
                                              options.policy);
  auto catalog = store_.catalog();

  auto prompt = build_prompt(question, snapshot, plan, mode);
  auto reply = invoke_llm(runtime_, prompt, options.config ? *options.config : settings_.get());
  auto candidates = extract_codes(reply.text);
  auto rec = filter_against_catalog(candidates, catalog);
  rec.source_reply = std::move(reply);
  rec.mode = mode;
  rec.prompt_text = std::move(prompt.text);

  if (options.record_history)
    store_.append_history(format_history_line(io::utc_timestamp(), account->username, mode, question, rec.codes,
                                              rec.source_reply.latency_seconds));
  if (options.notify)
    notify::notify_account(sink_, *account, notify::EventKind::NewRecommendation,
                           {{"username", account->username},
                            {"question", std::string(io::trim(question))},
                            {"codes", rec.codes.empty() ? std::string("(none)") : join(rec.codes, ", ")}});
  return rec;
}

}  // namespace smartcourse::advisor
