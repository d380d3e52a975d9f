#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcourse/grade.hpp"

namespace smartcourse::store {

namespace fs = std::filesystem;

enum class Role { Student, Instructor, Administrator };

std::string_view role_name(Role r) noexcept;
std::optional<Role> parse_role(std::string_view text) noexcept;

struct Account {
  std::string username;
  std::string password_hash;  // hexsalt$iterations$hexdigest
  Role role = Role::Student;
  std::string major;  // empty allowed for non-students
  std::string email;  // optional

  bool operator==(const Account&) const = default;
};

struct Course {
  std::string code;  // canonical "DEPT NNNN"
  std::string title;
  int credits = 3;

  bool operator==(const Course&) const = default;
};

struct PlanEntry {
  int year = 1;
  std::string code;

  bool operator==(const PlanEntry&) const = default;
};

struct DegreePlan {
  std::string major;
  std::vector<PlanEntry> entries;

  bool operator==(const DegreePlan&) const = default;
};

struct LedgerEntry {
  std::string username;
  std::string code;
  std::optional<Grade> grade;  // absent while in progress

  bool in_progress() const noexcept { return !grade.has_value(); }
  bool operator==(const LedgerEntry&) const = default;
};

/// Repository locations. Relative paths are taken against root_dir; after
/// normalization every path must stay under root_dir.
struct StoreConfig {
  fs::path root_dir = ".";
  fs::path accounts_file = "accounts.txt";
  fs::path catalog_file = "catalog.txt";
  fs::path ledger_file = "ledger.txt";
  fs::path plan_dir = "plans";
  fs::path history_file = "advise_history.txt";
  fs::path audit_file = "audit.log";
  int hash_iterations = 100000;

  /// Returns a copy with absolute, normalized paths. Throws ConfigError on escape.
  StoreConfig resolved() const;
};

// Password hashing --------------------------------------------------------

inline constexpr std::size_t kMinSaltBytes = 16;

/// h1 = SHA256(salt || password); h(i+1) = SHA256(h(i) || salt || password).
/// Returns "hex(salt)$iterations$hex(h_iterations)".
std::string hash_password(std::string_view password, std::string_view salt, int iterations);

std::string random_salt(std::size_t bytes = kMinSaltBytes);

/// Recomputes the digest from the salt and iteration count embedded in
/// `stored` and compares in constant time. Throws CorruptRecord if `stored`
/// does not parse.
bool verify_password(std::string_view password, std::string_view stored);

// Line formats ------------------------------------------------------------
// Parsers throw Error(MalformedLine) naming the 1-based line number.

std::vector<Account> parse_accounts(std::string_view text);
std::string format_accounts(std::span<const Account> accounts);

std::vector<Course> parse_catalog(std::string_view text);
std::string format_catalog(std::span<const Course> catalog);

DegreePlan parse_plan(std::string_view major, std::string_view text);
std::string format_plan(const DegreePlan& plan);

std::vector<LedgerEntry> parse_ledger(std::string_view text);
std::string format_ledger(std::span<const LedgerEntry> ledger);

void validate(const Account& a);
void validate(const Course& c);
void validate(const DegreePlan& p);
void validate(const LedgerEntry& e);

bool is_token(std::string_view text) noexcept;

/// Flat-file repositories. Reads are lock-free snapshots (files are replaced
/// by rename); every mutation holds the per-file writer lock across
/// read-modify-write. Returned values are independent copies.
class Store {
 public:
  explicit Store(StoreConfig config);

  const StoreConfig& config() const noexcept { return config_; }

  // accounts
  std::vector<Account> accounts() const;
  std::optional<Account> find_account(std::string_view username) const;
  Account authenticate(std::string_view username, std::string_view password) const;
  /// Creates or replaces an account by username.
  void upsert_account(const Account& account);
  Account create_account(std::string_view username, std::string_view password, Role role,
                         std::string_view major, std::string_view email = {});
  void reset_password(std::string_view username, std::string_view password);
  void save_accounts(std::span<const Account> accounts);

  // catalog
  std::vector<Course> catalog() const;
  std::optional<Course> find_course(std::string_view code) const;
  std::vector<Course> upsert_course(const Course& course);
  std::vector<Course> remove_course(std::string_view code);
  void save_catalog(std::span<const Course> catalog);

  // plans
  fs::path plan_path(std::string_view major) const;
  DegreePlan load_plan(std::string_view major) const;
  void save_plan(const DegreePlan& plan);

  // ledger
  std::vector<LedgerEntry> ledger() const;
  std::vector<LedgerEntry> ledger_for(std::string_view username) const;
  std::vector<LedgerEntry> append_ledger(const LedgerEntry& entry);
  std::vector<LedgerEntry> set_grade(std::string_view username, std::string_view code, Grade grade);
  /// Removes the in-progress entry for (username, code).
  std::vector<LedgerEntry> remove_active(std::string_view username, std::string_view code);
  void save_ledger(std::span<const LedgerEntry> ledger);

  // append-only logs
  void append_history(std::string_view line);
  void append_audit(std::string_view line);
  std::vector<std::string> history_lines() const;
  std::vector<std::string> audit_tail(std::size_t n) const;

  /// Test hook: runs between temp-write and rename for every repository write.
  void set_pre_rename_hook(std::function<void(const fs::path&)> hook) { hook_ = std::move(hook); }

 private:
  void write(const fs::path& path, std::string_view content) const;

  StoreConfig config_;
  std::function<void(const fs::path&)> hook_;
};

}  // namespace smartcourse::store
