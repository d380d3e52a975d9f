#include "smartcourse/academics.hpp"

#include <algorithm>
#include <map>

#include "smartcourse/course_code.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/notify.hpp"

namespace smartcourse::academics {

namespace {

std::string require_code(std::string_view code) {
  auto canonical = canonical_code(code);
  if (!canonical) throw Error(Errc::InvalidCode, "malformed course code '" + std::string(code) + "'");
  return *canonical;
}

}  // namespace

std::set<std::string> ProgressSnapshot::completed_codes() const {
  std::set<std::string> out;
  for (const auto& t : completed) out.insert(t.code);
  return out;
}

std::set<std::string> ProgressSnapshot::not_started() const {
  std::set<std::string> out;
  std::set_difference(outstanding.begin(), outstanding.end(), in_progress.begin(), in_progress.end(),
                      std::inserter(out, out.end()));
  return out;
}

ProgressSnapshot compute_progress(std::string_view username, std::span<const store::LedgerEntry> entries,
                                  const store::DegreePlan& plan, const GradePolicy& policy) {
  ProgressSnapshot snap;
  snap.username = std::string(username);

  std::map<std::string, Grade> newest;
  std::map<std::string, Grade> best;
  for (const auto& e : entries) {
    if (e.username != username) continue;
    if (e.in_progress()) {
      snap.in_progress.insert(e.code);
      continue;
    }
    newest[e.code] = *e.grade;
    auto [it, inserted] = best.emplace(e.code, *e.grade);
    if (!inserted && better_than(*e.grade, it->second)) it->second = *e.grade;
  }
  for (const auto& [code, grade] : newest) snap.completed.push_back({code, grade});
  for (const auto& [code, grade] : best)
    if (policy.is_low(grade)) snap.low_grade.insert(code);
  for (const auto& p : plan.entries)
    if (!newest.contains(p.code)) snap.outstanding.insert(p.code);
  return snap;
}

double compute_gpa(std::span<const store::LedgerEntry> entries, std::span<const store::Course> catalog) {
  std::map<std::string, Grade> newest;
  for (const auto& e : entries)
    if (e.grade) newest[e.code] = *e.grade;
  if (newest.empty()) throw Error(Errc::NoCompletedCourses, "no completed courses");
  double weighted = 0.0;
  double credits = 0.0;
  for (const auto& [code, grade] : newest) {
    auto it = std::find_if(catalog.begin(), catalog.end(), [&](const store::Course& c) { return c.code == code; });
    double cr = it == catalog.end() ? kDefaultCredits : it->credits;
    weighted += cr * grade_points(grade);
    credits += cr;
  }
  return weighted / credits;
}

Registrar::Registrar(store::Store& store, notify::EventSink* sink) : store_(store), sink_(sink) {}

store::Account Registrar::require_student(std::string_view username) const {
  auto account = store_.find_account(username);
  if (!account || account->role != store::Role::Student)
    throw Error(Errc::UnknownStudent, "no student '" + std::string(username) + "'");
  return *account;
}

store::LedgerEntry Registrar::enroll(const store::Account& student, std::string_view code) {
  if (student.role != store::Role::Student) throw Error(Errc::Forbidden, "only students may enroll");
  store::LedgerEntry entry{student.username, require_code(code), std::nullopt};
  auto course = store_.find_course(entry.code);
  if (!course) throw Error(Errc::UnknownCourse, "course '" + entry.code + "' is not in the catalog");
  store_.append_ledger(entry);
  notify::notify_account(sink_, student, notify::EventKind::EnrollmentConfirmation,
                         {{"username", student.username}, {"code", entry.code}, {"title", course->title}});
  return entry;
}

void Registrar::drop(const store::Account& student, std::string_view code) {
  if (student.role != store::Role::Student) throw Error(Errc::Forbidden, "only students may drop");
  store_.remove_active(student.username, require_code(code));
}

std::vector<TranscriptEntry> Registrar::assign_grade(const store::Account& instructor, std::string_view student,
                                                     std::string_view code, std::string_view grade_text) {
  if (instructor.role != store::Role::Instructor) throw Error(Errc::Forbidden, "only instructors may assign grades");
  auto grade = parse_grade(grade_text);
  if (!grade) throw Error(Errc::InvalidGrade, "grade '" + std::string(grade_text) + "' is not on the scale");
  auto account = require_student(student);
  auto canonical = require_code(code);
  auto ledger = store_.set_grade(account.username, canonical, *grade);
  notify::notify_account(sink_, account, notify::EventKind::GradePosting,
                         {{"username", account.username}, {"code", canonical},
                          {"grade", std::string(grade_symbol(*grade))}});
  store::DegreePlan none;
  return academics::compute_progress(account.username, ledger, none).completed;
}

ProgressSnapshot Registrar::compute_progress(std::string_view student, const store::DegreePlan& plan,
                                             const GradePolicy& policy) const {
  auto account = require_student(student);
  return academics::compute_progress(account.username, store_.ledger_for(account.username), plan, policy);
}

ProgressSnapshot Registrar::progress(std::string_view student, const GradePolicy& policy) const {
  auto account = require_student(student);
  return compute_progress(student, store_.load_plan(account.major), policy);
}

double Registrar::gpa(std::string_view student) const {
  auto account = require_student(student);
  return compute_gpa(store_.ledger_for(account.username), store_.catalog());
}

}  // namespace smartcourse::academics
