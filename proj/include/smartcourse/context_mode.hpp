#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace smartcourse {

/// Which context sections accompany the question in an advising prompt.
enum class ContextMode { Full, NoTranscript, NoPlan, QuestionOnly };

/// Report order: full, noPlan, noTranscript, question.
inline constexpr std::array<ContextMode, 4> kReportModeOrder{ContextMode::Full, ContextMode::NoPlan,
                                                             ContextMode::NoTranscript, ContextMode::QuestionOnly};

constexpr std::string_view mode_name(ContextMode m) noexcept {
  switch (m) {
    case ContextMode::Full: return "full";
    case ContextMode::NoTranscript: return "noTranscript";
    case ContextMode::NoPlan: return "noPlan";
    case ContextMode::QuestionOnly: return "question";
  }
  return "full";
}

constexpr bool includes_transcript(ContextMode m) noexcept {
  return m == ContextMode::Full || m == ContextMode::NoPlan;
}

constexpr bool includes_plan(ContextMode m) noexcept {
  return m == ContextMode::Full || m == ContextMode::NoTranscript;
}

std::optional<ContextMode> parse_mode(std::string_view text) noexcept;

}  // namespace smartcourse
