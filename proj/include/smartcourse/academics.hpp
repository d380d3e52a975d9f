#pragma once

#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcourse/grade.hpp"
#include "smartcourse/store.hpp"

namespace smartcourse::notify {
class EventSink;
}

namespace smartcourse::academics {

struct TranscriptEntry {
  std::string code;
  Grade grade;

  auto operator<=>(const TranscriptEntry&) const = default;
};

/// Courses completed with a grade strictly worse than the threshold are low
/// grades; with strict=false the threshold itself also counts.
struct GradePolicy {
  Grade low_grade_threshold = Grade::BMinus;
  bool strict = true;

  bool is_low(Grade g) const noexcept {
    return strict ? worse_than(g, low_grade_threshold) : !better_than(g, low_grade_threshold);
  }
};

struct ProgressSnapshot {
  std::string username;
  /// One entry per completed code, carrying the most recent grade.
  std::vector<TranscriptEntry> completed;
  /// Plan codes never completed (in-progress courses stay here).
  std::set<std::string> outstanding;
  /// Completed codes whose best grade is low under the policy.
  std::set<std::string> low_grade;
  std::set<std::string> in_progress;

  std::set<std::string> completed_codes() const;
  /// Outstanding codes with no active enrollment.
  std::set<std::string> not_started() const;
};

/// Pure progress computation over one student's ledger entries.
ProgressSnapshot compute_progress(std::string_view username, std::span<const store::LedgerEntry> entries,
                                  const store::DegreePlan& plan, const GradePolicy& policy = {});

/// Credit-weighted mean of grade points using the newest grade per code.
/// Codes missing from the catalog count as kDefaultCredits.
double compute_gpa(std::span<const store::LedgerEntry> entries, std::span<const store::Course> catalog);

inline constexpr int kDefaultCredits = 3;

/// Enrollment, grading and progress over the store, with notification events.
class Registrar {
 public:
  explicit Registrar(store::Store& store, notify::EventSink* sink = nullptr);

  store::LedgerEntry enroll(const store::Account& student, std::string_view code);
  void drop(const store::Account& student, std::string_view code);
  /// Returns the student's completed transcript after the change.
  std::vector<TranscriptEntry> assign_grade(const store::Account& instructor, std::string_view student,
                                            std::string_view code, std::string_view grade);

  ProgressSnapshot compute_progress(std::string_view student, const store::DegreePlan& plan,
                                    const GradePolicy& policy = {}) const;
  /// Loads the plan for the student's declared major.
  ProgressSnapshot progress(std::string_view student, const GradePolicy& policy = {}) const;
  double gpa(std::string_view student) const;

  store::Account require_student(std::string_view username) const;

 private:
  store::Store& store_;
  notify::EventSink* sink_;
};

}  // namespace smartcourse::academics
