#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcourse/academics.hpp"
#include "smartcourse/context_mode.hpp"
#include "smartcourse/store.hpp"

namespace smartcourse::notify {
class EventSink;
}

namespace smartcourse::advisor {

inline constexpr std::string_view kDefaultModel = "llama3.1:8b";

struct AdvisingPrompt {
  std::string text;
  ContextMode mode = ContextMode::Full;
};

inline constexpr std::string_view kInstruction =
    "You are an academic advisor for an undergraduate student. Answer the question below. "
    "Recommend specific courses by course code (for example CPS 1231) and give a brief "
    "justification for each.";
inline constexpr std::string_view kTranscriptHeader = "### TRANSCRIPT";
inline constexpr std::string_view kPlanHeader = "### PLAN";
inline constexpr std::string_view kQuestionHeader = "### QUESTION";

/// Instruction, then TRANSCRIPT ("CODE grade" lines), PLAN ("year CODE"
/// lines) and QUESTION sections, each a blank-line-terminated block. Modes
/// drop whole blocks, so any ablated prompt is the full prompt minus blocks.
AdvisingPrompt build_prompt(std::string_view question, const academics::ProgressSnapshot& snapshot,
                            const store::DegreePlan& plan, ContextMode mode);

struct RawReply {
  std::string text;
  double latency_seconds = 0.0;
};

struct AdvisorConfig {
  std::string model_name{kDefaultModel};
  /// http://host:port/api/generate, exec:<command template>, or stub:<name>
  std::string runtime = "http://127.0.0.1:11434/api/generate";
  double timeout_seconds = 120.0;
  /// Passed through to the runtime untouched (e.g. temperature).
  std::map<std::string, std::string> options;
};

/// Narrow boundary to a text-generation runtime. complete() must honour
/// cfg.timeout_seconds and throw Error(Timeout) or Error(RuntimeUnavailable).
class LlmRuntime {
 public:
  virtual ~LlmRuntime() = default;
  virtual std::string complete(const std::string& prompt, const AdvisorConfig& cfg) = 0;
  virtual std::string describe() const = 0;
};

/// Ollama-compatible /api/generate client. Accepts whole-body JSON or
/// newline-delimited streamed chunks.
class HttpRuntime : public LlmRuntime {
 public:
  explicit HttpRuntime(std::string url);
  std::string complete(const std::string& prompt, const AdvisorConfig& cfg) override;
  std::string describe() const override { return url_; }

 private:
  std::string url_;
  std::string scheme_host_port_;
  std::string path_;
};

/// Runs a command with the prompt on stdin and the reply on stdout.
/// "{model}" in the template expands to the configured model name.
class ProcessRuntime : public LlmRuntime {
 public:
  explicit ProcessRuntime(std::string command_template);
  std::string complete(const std::string& prompt, const AdvisorConfig& cfg) override;
  std::string describe() const override { return "exec:" + template_; }

 private:
  std::string template_;
};

/// Deterministic in-process runtime driven by a script function.
class ScriptedRuntime : public LlmRuntime {
 public:
  using Script = std::function<std::string(const std::string& prompt)>;
  explicit ScriptedRuntime(Script script, std::chrono::milliseconds delay = {}, std::string name = "scripted");
  std::string complete(const std::string& prompt, const AdvisorConfig& cfg) override;
  std::string describe() const override { return "stub:" + name_; }

 private:
  Script script_;
  std::chrono::milliseconds delay_;
  std::string name_;
};

/// Reads prompt sections and answers from whatever context is present:
/// transcript low grades become retakes, plan codes absent from the
/// transcript become requirements, and a bare question gets generic prose.
std::string mode_sensitive_reply(const std::string& prompt);

/// Parses the "### PLAN" and "### TRANSCRIPT" blocks of a prompt.
struct PromptSections {
  bool has_transcript = false;
  bool has_plan = false;
  bool has_question = false;
  std::vector<std::pair<std::string, std::string>> transcript;  // code, grade
  std::vector<std::string> plan;
  std::string question;
};
PromptSections parse_prompt_sections(std::string_view prompt);

/// Built-in stub locators: stub:mode-sensitive, stub:silent, stub:plan-parrot
/// (needs `parrot_codes`), stub:unavailable, stub:sleep:<ms>, stub:fixed:<text>.
std::unique_ptr<LlmRuntime> make_runtime(std::string_view locator, std::vector<std::string> parrot_codes = {});

/// Calls the runtime and measures wall-clock latency around the call.
RawReply invoke_llm(LlmRuntime& runtime, const AdvisingPrompt& prompt, const AdvisorConfig& cfg);

/// Course codes in first-occurrence order, canonical and de-duplicated.
/// Matches 2-4 letters, optional space or hyphen, 3-4 digits, on word
/// boundaries, case-insensitively.
std::vector<std::string> extract_codes(std::string_view reply_text);

struct RecommendationSet {
  std::vector<std::string> codes;    // set R
  std::vector<std::string> removed;  // off-catalog candidates
  RawReply source_reply;
  ContextMode mode = ContextMode::Full;
  std::string prompt_text;
};

RecommendationSet filter_against_catalog(std::span<const std::string> candidates,
                                         std::span<const store::Course> catalog);

/// Thread-safe holder so the model can be switched while serving.
class ModelSettings {
 public:
  explicit ModelSettings(AdvisorConfig cfg) : cfg_(std::move(cfg)) {}
  AdvisorConfig get() const {
    std::lock_guard lock(mutex_);
    return cfg_;
  }
  void set_model(std::string name) {
    std::lock_guard lock(mutex_);
    cfg_.model_name = std::move(name);
  }

 private:
  mutable std::mutex mutex_;
  AdvisorConfig cfg_;
};

struct AdviseOptions {
  bool record_history = true;
  bool notify = true;
  academics::GradePolicy policy{};
  /// Used instead of the shared model settings when set.
  const AdvisorConfig* config = nullptr;
};

/// History line: timestamp|username|mode|question-hash|codes|latency
std::string format_history_line(std::string_view timestamp, std::string_view username, ContextMode mode,
                                std::string_view question, std::span<const std::string> codes, double latency);
/// First 16 hex digits of SHA-256 over the question text.
std::string question_hash(std::string_view question);

class Advisor {
 public:
  Advisor(store::Store& store, LlmRuntime& runtime, ModelSettings& settings, notify::EventSink* sink = nullptr);

  /// progress -> prompt -> runtime -> extract -> catalog filter, then history
  /// and notification. Only the history log is written.
  RecommendationSet advise(std::string_view username, std::string_view question, ContextMode mode,
                           const AdviseOptions& options = {});

  LlmRuntime& runtime() noexcept { return runtime_; }
  store::Store& store() noexcept { return store_; }

 private:
  store::Store& store_;
  LlmRuntime& runtime_;
  ModelSettings& settings_;
  notify::EventSink* sink_;
};

}  // namespace smartcourse::advisor
