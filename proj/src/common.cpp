#include <cctype>

#include "smartcourse/context_mode.hpp"
#include "smartcourse/course_code.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/grade.hpp"

namespace smartcourse {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidCredentials: return "invalid_credentials";
    case Errc::CorruptRecord: return "corrupt_record";
    case Errc::NotFound: return "not_found";
    case Errc::InvalidCode: return "invalid_code";
    case Errc::InvalidValue: return "invalid_value";
    case Errc::UnknownMajor: return "unknown_major";
    case Errc::MalformedLine: return "malformed_line";
    case Errc::DuplicateEnrollment: return "duplicate_enrollment";
    case Errc::NotEnrolled: return "not_enrolled";
    case Errc::UnknownCourse: return "unknown_course";
    case Errc::UnknownStudent: return "unknown_student";
    case Errc::Forbidden: return "forbidden";
    case Errc::Unauthorized: return "unauthorized";
    case Errc::InvalidGrade: return "invalid_grade";
    case Errc::NoCompletedCourses: return "no_completed_courses";
    case Errc::EmptyQuestion: return "empty_question";
    case Errc::Timeout: return "timeout";
    case Errc::RuntimeUnavailable: return "runtime_unavailable";
    case Errc::InvalidSets: return "invalid_sets";
    case Errc::EmptySamples: return "empty_samples";
    case Errc::EmptyQuerySet: return "empty_query_set";
    case Errc::MalformedFile: return "malformed_file";
    case Errc::InvalidRecipient: return "invalid_recipient";
    case Errc::SmtpUnreachable: return "smtp_unreachable";
    case Errc::IoError: return "io_error";
    case Errc::ConfigError: return "config_error";
  }
  return "unknown";
}

// grades ------------------------------------------------------------------

namespace {
struct GradeInfo {
  std::string_view symbol;
  double points;
};
constexpr GradeInfo kGradeTable[] = {
    {"A", 4.0}, {"A-", 3.7}, {"B+", 3.3}, {"B", 3.0}, {"B-", 2.7}, {"C+", 2.3},
    {"C", 2.0}, {"C-", 1.7}, {"D+", 1.3}, {"D", 1.0}, {"F", 0.0},
};
}  // namespace

std::string_view grade_symbol(Grade g) noexcept { return kGradeTable[static_cast<int>(g)].symbol; }

double grade_points(Grade g) noexcept { return kGradeTable[static_cast<int>(g)].points; }

std::optional<Grade> parse_grade(std::string_view text) noexcept {
  std::string ascii(text);
  for (std::string_view dash : {"\xE2\x88\x92", "\xE2\x80\x93"}) {
    if (auto pos = ascii.find(dash); pos != std::string::npos) ascii.replace(pos, dash.size(), "-");
  }
  for (Grade g : kAllGrades) {
    if (grade_symbol(g) == ascii) return g;
  }
  return std::nullopt;
}

// course codes ------------------------------------------------------------

std::optional<std::string> canonical_code(std::string_view text) {
  std::size_t i = 0;
  std::string dept;
  while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
    dept.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    ++i;
  }
  if (dept.size() < 2 || dept.size() > 4) return std::nullopt;
  if (i < text.size() && (text[i] == ' ' || text[i] == '-')) ++i;
  std::string number;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) number.push_back(text[i++]);
  if (i != text.size() || number.size() < 3 || number.size() > 4) return std::nullopt;
  return dept + " " + number;
}

bool is_canonical_code(std::string_view text) {
  auto c = canonical_code(text);
  return c && *c == text;
}

// modes -------------------------------------------------------------------

std::optional<ContextMode> parse_mode(std::string_view text) noexcept {
  if (text == "full" || text == "Full") return ContextMode::Full;
  if (text == "noTranscript" || text == "NoTranscript") return ContextMode::NoTranscript;
  if (text == "noPlan" || text == "NoPlan") return ContextMode::NoPlan;
  if (text == "question" || text == "questionOnly" || text == "QuestionOnly") return ContextMode::QuestionOnly;
  return std::nullopt;
}

}  // namespace smartcourse
