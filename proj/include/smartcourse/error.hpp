#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smartcourse {

enum class Errc {
  InvalidCredentials,
  CorruptRecord,
  NotFound,
  InvalidCode,
  InvalidValue,
  UnknownMajor,
  MalformedLine,
  DuplicateEnrollment,
  NotEnrolled,
  UnknownCourse,
  UnknownStudent,
  Forbidden,
  Unauthorized,
  InvalidGrade,
  NoCompletedCourses,
  EmptyQuestion,
  Timeout,
  RuntimeUnavailable,
  InvalidSets,
  EmptySamples,
  EmptyQuerySet,
  MalformedFile,
  InvalidRecipient,
  SmtpUnreachable,
  IoError,
  ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// Domain failure carrying a machine-readable code. Every module throws this
/// for contract violations; std::exception subclasses escaping a module are bugs.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message) : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace smartcourse
