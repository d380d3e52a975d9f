#include "smartcourse/store.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>

#include "smartcourse/course_code.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"

namespace smartcourse::store {

namespace {

[[noreturn]] void malformed(std::string_view what, std::size_t line, std::string_view detail) {
  throw Error(Errc::MalformedLine,
              std::string(what) + " line " + std::to_string(line) + ": " + std::string(detail));
}

std::optional<int> parse_int(std::string_view text) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

bool has_forbidden_chars(std::string_view text) {
  return text.find_first_of("|\n\r") != std::string_view::npos;
}

std::string sha256(std::string_view data) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out, &len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::IoError, "SHA-256 digest failed");
  return std::string(reinterpret_cast<const char*>(out), len);
}

struct ParsedHash {
  std::string salt;
  int iterations;
  std::string digest;
};

std::optional<ParsedHash> parse_hash(std::string_view stored) {
  auto parts = io::split(stored, '$');
  if (parts.size() != 3) return std::nullopt;
  auto iters = parse_int(parts[1]);
  if (!iters || *iters < 1) return std::nullopt;
  try {
    auto salt = io::from_hex(parts[0]);
    auto digest = io::from_hex(parts[2]);
    if (salt.size() < kMinSaltBytes || digest.size() != 32) return std::nullopt;
    return ParsedHash{std::move(salt), *iters, std::move(digest)};
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::string_view role_name(Role r) noexcept {
  switch (r) {
    case Role::Student: return "student";
    case Role::Instructor: return "instructor";
    case Role::Administrator: return "administrator";
  }
  return "student";
}

std::optional<Role> parse_role(std::string_view text) noexcept {
  if (text == "student") return Role::Student;
  if (text == "instructor") return Role::Instructor;
  if (text == "administrator") return Role::Administrator;
  return std::nullopt;
}

StoreConfig StoreConfig::resolved() const {
  StoreConfig out = *this;
  out.root_dir = fs::absolute(root_dir).lexically_normal();
  auto root = out.root_dir.string();
  if (!root.empty() && root.back() == '/') root.pop_back();
  auto resolve = [&](const fs::path& p) {
    fs::path full = (p.is_absolute() ? p : out.root_dir / p).lexically_normal();
    auto s = full.string();
    if (s != root && s.rfind(root + "/", 0) != 0)
      throw Error(Errc::ConfigError, "path '" + p.string() + "' escapes store root '" + root + "'");
    return full;
  };
  out.accounts_file = resolve(accounts_file);
  out.catalog_file = resolve(catalog_file);
  out.ledger_file = resolve(ledger_file);
  out.plan_dir = resolve(plan_dir);
  out.history_file = resolve(history_file);
  out.audit_file = resolve(audit_file);
  if (hash_iterations < 1) throw Error(Errc::ConfigError, "hash_iterations must be positive");
  return out;
}

// hashing -----------------------------------------------------------------

std::string hash_password(std::string_view password, std::string_view salt, int iterations) {
  if (iterations < 1) throw Error(Errc::InvalidValue, "iterations must be >= 1");
  if (salt.size() < kMinSaltBytes) throw Error(Errc::InvalidValue, "salt must be at least 16 bytes");
  std::string tail;
  tail.reserve(salt.size() + password.size());
  tail.append(salt).append(password);
  std::string h = sha256(tail);
  std::string buf;
  for (int i = 1; i < iterations; ++i) {
    buf.assign(h).append(tail);
    h = sha256(buf);
  }
  return io::to_hex(salt) + "$" + std::to_string(iterations) + "$" + io::to_hex(h);
}

std::string random_salt(std::size_t bytes) {
  std::string salt(bytes, '\0');
  if (RAND_bytes(reinterpret_cast<unsigned char*>(salt.data()), static_cast<int>(bytes)) != 1)
    throw Error(Errc::IoError, "RAND_bytes failed");
  return salt;
}

bool verify_password(std::string_view password, std::string_view stored) {
  auto parsed = parse_hash(stored);
  if (!parsed) throw Error(Errc::CorruptRecord, "stored password hash does not parse");
  auto candidate = parse_hash(hash_password(password, parsed->salt, parsed->iterations));
  return CRYPTO_memcmp(candidate->digest.data(), parsed->digest.data(), parsed->digest.size()) == 0;
}

// validation --------------------------------------------------------------

bool is_token(std::string_view text) noexcept {
  if (text.empty()) return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

void validate(const Account& a) {
  if (!is_token(a.username)) throw Error(Errc::InvalidValue, "username must be a non-empty token");
  if (!parse_hash(a.password_hash)) throw Error(Errc::CorruptRecord, "password hash for '" + a.username + "' is malformed");
  if (!a.major.empty() && !is_token(a.major)) throw Error(Errc::InvalidValue, "major must be a token");
  if (has_forbidden_chars(a.email)) throw Error(Errc::InvalidValue, "email contains forbidden characters");
}

void validate(const Course& c) {
  if (!is_canonical_code(c.code)) throw Error(Errc::InvalidCode, "course code '" + c.code + "' is not canonical");
  if (io::trim(c.title).empty()) throw Error(Errc::InvalidValue, "course title must be non-empty");
  if (has_forbidden_chars(c.title) || c.title != io::trim(c.title))
    throw Error(Errc::InvalidValue, "course title may not contain '|', newlines or edge whitespace");
  if (!io::is_valid_utf8(c.title)) throw Error(Errc::InvalidValue, "course title is not valid UTF-8");
  if (c.credits < 1) throw Error(Errc::InvalidValue, "credits must be positive");
}

void validate(const DegreePlan& p) {
  if (!is_token(p.major)) throw Error(Errc::InvalidValue, "major must be a token");
  std::vector<std::string> seen;
  for (const auto& e : p.entries) {
    if (e.year < 1 || e.year > 4) throw Error(Errc::InvalidValue, "plan year must be 1-4");
    if (!is_canonical_code(e.code)) throw Error(Errc::InvalidCode, "plan code '" + e.code + "' is not canonical");
    if (std::find(seen.begin(), seen.end(), e.code) != seen.end())
      throw Error(Errc::InvalidValue, "duplicate plan code '" + e.code + "'");
    seen.push_back(e.code);
  }
}

void validate(const LedgerEntry& e) {
  if (!is_token(e.username)) throw Error(Errc::InvalidValue, "ledger username must be a token");
  if (!is_canonical_code(e.code)) throw Error(Errc::InvalidCode, "ledger code '" + e.code + "' is not canonical");
}

// formats -----------------------------------------------------------------

std::vector<Account> parse_accounts(std::string_view text) {
  std::vector<Account> out;
  for (const auto& [number, line] : io::record_lines(text)) {
    auto f = io::split(line, '|');
    if (f.size() != 4 && f.size() != 5) malformed("accounts", number, "expected 4 or 5 fields");
    auto role = parse_role(f[2]);
    if (!role) malformed("accounts", number, "unknown role '" + f[2] + "'");
    Account a{f[0], f[1], *role, f[3], f.size() == 5 ? f[4] : std::string{}};
    try {
      validate(a);
    } catch (const Error& e) {
      malformed("accounts", number, e.what());
    }
    if (std::any_of(out.begin(), out.end(), [&](const Account& x) { return x.username == a.username; }))
      malformed("accounts", number, "duplicate username '" + a.username + "'");
    out.push_back(std::move(a));
  }
  return out;
}

std::string format_accounts(std::span<const Account> accounts) {
  std::string out;
  for (const auto& a : accounts) {
    out += a.username + "|" + a.password_hash + "|" + std::string(role_name(a.role)) + "|" + a.major;
    if (!a.email.empty()) out += "|" + a.email;
    out += "\n";
  }
  return out;
}

std::vector<Course> parse_catalog(std::string_view text) {
  std::vector<Course> out;
  for (const auto& [number, line] : io::record_lines(text)) {
    auto f = io::split(line, '|');
    if (f.size() != 3) malformed("catalog", number, "expected 3 fields");
    auto credits = parse_int(f[2]);
    if (!credits) malformed("catalog", number, "credits is not an integer");
    Course c{f[0], f[1], *credits};
    try {
      validate(c);
    } catch (const Error& e) {
      malformed("catalog", number, e.what());
    }
    if (std::any_of(out.begin(), out.end(), [&](const Course& x) { return x.code == c.code; }))
      malformed("catalog", number, "duplicate code '" + c.code + "'");
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_catalog(std::span<const Course> catalog) {
  std::string out;
  for (const auto& c : catalog) out += c.code + "|" + c.title + "|" + std::to_string(c.credits) + "\n";
  return out;
}

DegreePlan parse_plan(std::string_view major, std::string_view text) {
  DegreePlan plan{std::string(major), {}};
  for (const auto& [number, line] : io::record_lines(text)) {
    auto f = io::split(line, '|');
    if (f.size() != 2) malformed("plan", number, "expected 2 fields");
    auto year = parse_int(f[0]);
    if (!year || *year < 1 || *year > 4) malformed("plan", number, "year must be 1-4");
    if (!is_canonical_code(f[1])) malformed("plan", number, "code '" + f[1] + "' is not canonical");
    if (std::any_of(plan.entries.begin(), plan.entries.end(), [&](const PlanEntry& e) { return e.code == f[1]; }))
      malformed("plan", number, "duplicate code '" + f[1] + "'");
    plan.entries.push_back({*year, f[1]});
  }
  return plan;
}

std::string format_plan(const DegreePlan& plan) {
  std::string out;
  for (const auto& e : plan.entries) out += std::to_string(e.year) + "|" + e.code + "\n";
  return out;
}

std::vector<LedgerEntry> parse_ledger(std::string_view text) {
  std::vector<LedgerEntry> out;
  for (const auto& [number, line] : io::record_lines(text)) {
    auto f = io::split(line, '|');
    if (f.size() != 3) malformed("ledger", number, "expected 3 fields");
    LedgerEntry e{f[0], f[1], std::nullopt};
    if (!f[2].empty()) {
      e.grade = parse_grade(f[2]);
      if (!e.grade) malformed("ledger", number, "unknown grade '" + f[2] + "'");
    }
    try {
      validate(e);
    } catch (const Error& err) {
      malformed("ledger", number, err.what());
    }
    if (e.in_progress() && std::any_of(out.begin(), out.end(), [&](const LedgerEntry& x) {
          return x.in_progress() && x.username == e.username && x.code == e.code;
        }))
      malformed("ledger", number, "duplicate active enrollment");
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_ledger(std::span<const LedgerEntry> ledger) {
  std::string out;
  for (const auto& e : ledger) {
    out += e.username + "|" + e.code + "|";
    if (e.grade) out += grade_symbol(*e.grade);
    out += "\n";
  }
  return out;
}

// Store -------------------------------------------------------------------

Store::Store(StoreConfig config) : config_(config.resolved()) {}

void Store::write(const fs::path& path, std::string_view content) const {
  io::atomic_write(path, content, hook_);
}

std::vector<Account> Store::accounts() const { return parse_accounts(io::read_file_or_empty(config_.accounts_file)); }

std::optional<Account> Store::find_account(std::string_view username) const {
  for (auto& a : accounts())
    if (a.username == username) return a;
  return std::nullopt;
}

Account Store::authenticate(std::string_view username, std::string_view password) const {
  auto account = find_account(username);
  if (!account) {
    // Burn comparable time so absent users are not distinguishable by latency.
    static const std::string dummy = hash_password("", std::string(kMinSaltBytes, '\0'), 1);
    (void)verify_password(password, dummy);
    spdlog::debug("authentication failed for unknown user '{}'", username);
    throw Error(Errc::InvalidCredentials, "invalid credentials");
  }
  if (!verify_password(password, account->password_hash)) {
    spdlog::debug("authentication failed for '{}': bad password", username);
    throw Error(Errc::InvalidCredentials, "invalid credentials");
  }
  return *account;
}

void Store::upsert_account(const Account& account) {
  validate(account);
  io::WriteLock lock(config_.accounts_file);
  auto all = accounts();
  auto it = std::find_if(all.begin(), all.end(), [&](const Account& a) { return a.username == account.username; });
  if (it == all.end())
    all.push_back(account);
  else
    *it = account;
  write(config_.accounts_file, format_accounts(all));
}

Account Store::create_account(std::string_view username, std::string_view password, Role role,
                              std::string_view major, std::string_view email) {
  Account a{std::string(username), hash_password(password, random_salt(), config_.hash_iterations), role,
            std::string(major), std::string(email)};
  upsert_account(a);
  return a;
}

void Store::reset_password(std::string_view username, std::string_view password) {
  io::WriteLock lock(config_.accounts_file);
  auto all = accounts();
  auto it = std::find_if(all.begin(), all.end(), [&](const Account& a) { return a.username == username; });
  if (it == all.end()) throw Error(Errc::NotFound, "no account '" + std::string(username) + "'");
  it->password_hash = hash_password(password, random_salt(), config_.hash_iterations);
  write(config_.accounts_file, format_accounts(all));
}

void Store::save_accounts(std::span<const Account> accounts) {
  for (const auto& a : accounts) validate(a);
  io::WriteLock lock(config_.accounts_file);
  write(config_.accounts_file, format_accounts(accounts));
}

std::vector<Course> Store::catalog() const { return parse_catalog(io::read_file_or_empty(config_.catalog_file)); }

std::optional<Course> Store::find_course(std::string_view code) const {
  auto canonical = canonical_code(code);
  if (!canonical) return std::nullopt;
  for (auto& c : catalog())
    if (c.code == *canonical) return c;
  return std::nullopt;
}

std::vector<Course> Store::upsert_course(const Course& course) {
  validate(course);
  io::WriteLock lock(config_.catalog_file);
  auto all = catalog();
  auto it = std::find_if(all.begin(), all.end(), [&](const Course& c) { return c.code == course.code; });
  if (it == all.end())
    all.push_back(course);
  else if (*it == course)
    return all;
  else
    *it = course;
  write(config_.catalog_file, format_catalog(all));
  return all;
}

std::vector<Course> Store::remove_course(std::string_view code) {
  auto canonical = canonical_code(code);
  if (!canonical) throw Error(Errc::InvalidCode, "malformed course code '" + std::string(code) + "'");
  io::WriteLock lock(config_.catalog_file);
  auto all = catalog();
  auto it = std::find_if(all.begin(), all.end(), [&](const Course& c) { return c.code == *canonical; });
  if (it == all.end()) throw Error(Errc::NotFound, "course '" + *canonical + "' is not in the catalog");
  all.erase(it);
  write(config_.catalog_file, format_catalog(all));
  return all;
}

void Store::save_catalog(std::span<const Course> catalog) {
  for (const auto& c : catalog) validate(c);
  io::WriteLock lock(config_.catalog_file);
  write(config_.catalog_file, format_catalog(catalog));
}

fs::path Store::plan_path(std::string_view major) const {
  if (!is_token(major)) throw Error(Errc::UnknownMajor, "invalid major '" + std::string(major) + "'");
  return config_.plan_dir / ("plan_" + std::string(major) + ".txt");
}

DegreePlan Store::load_plan(std::string_view major) const {
  auto path = plan_path(major);
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(Errc::UnknownMajor, "no degree plan for major '" + std::string(major) + "'");
  return parse_plan(major, io::read_file(path));
}

void Store::save_plan(const DegreePlan& plan) {
  validate(plan);
  auto path = plan_path(plan.major);
  io::WriteLock lock(path);
  write(path, format_plan(plan));
}

std::vector<LedgerEntry> Store::ledger() const { return parse_ledger(io::read_file_or_empty(config_.ledger_file)); }

std::vector<LedgerEntry> Store::ledger_for(std::string_view username) const {
  auto all = ledger();
  std::erase_if(all, [&](const LedgerEntry& e) { return e.username != username; });
  return all;
}

std::vector<LedgerEntry> Store::append_ledger(const LedgerEntry& entry) {
  validate(entry);
  if (!find_course(entry.code)) throw Error(Errc::UnknownCourse, "course '" + entry.code + "' is not in the catalog");
  io::WriteLock lock(config_.ledger_file);
  auto all = ledger();
  if (entry.in_progress() && std::any_of(all.begin(), all.end(), [&](const LedgerEntry& e) {
        return e.in_progress() && e.username == entry.username && e.code == entry.code;
      }))
    throw Error(Errc::DuplicateEnrollment, entry.username + " is already enrolled in " + entry.code);
  all.push_back(entry);
  write(config_.ledger_file, format_ledger(all));
  return all;
}

std::vector<LedgerEntry> Store::set_grade(std::string_view username, std::string_view code, Grade grade) {
  io::WriteLock lock(config_.ledger_file);
  auto all = ledger();
  auto it = std::find_if(all.begin(), all.end(), [&](const LedgerEntry& e) {
    return e.in_progress() && e.username == username && e.code == code;
  });
  if (it == all.end())
    throw Error(Errc::NotEnrolled, std::string(username) + " has no active enrollment in " + std::string(code));
  it->grade = grade;
  write(config_.ledger_file, format_ledger(all));
  return all;
}

std::vector<LedgerEntry> Store::remove_active(std::string_view username, std::string_view code) {
  io::WriteLock lock(config_.ledger_file);
  auto all = ledger();
  auto it = std::find_if(all.begin(), all.end(), [&](const LedgerEntry& e) {
    return e.in_progress() && e.username == username && e.code == code;
  });
  if (it == all.end())
    throw Error(Errc::NotEnrolled, std::string(username) + " has no active enrollment in " + std::string(code));
  all.erase(it);
  write(config_.ledger_file, format_ledger(all));
  return all;
}

void Store::save_ledger(std::span<const LedgerEntry> ledger) {
  for (const auto& e : ledger) validate(e);
  io::WriteLock lock(config_.ledger_file);
  write(config_.ledger_file, format_ledger(ledger));
}

void Store::append_history(std::string_view line) {
  io::WriteLock lock(config_.history_file);
  io::append_line(config_.history_file, line);
}

void Store::append_audit(std::string_view line) {
  io::WriteLock lock(config_.audit_file);
  io::append_line(config_.audit_file, line);
}

std::vector<std::string> Store::history_lines() const {
  std::vector<std::string> out;
  for (auto& l : io::record_lines(io::read_file_or_empty(config_.history_file))) out.push_back(std::move(l.text));
  return out;
}

std::vector<std::string> Store::audit_tail(std::size_t n) const {
  std::vector<std::string> out;
  for (auto& l : io::record_lines(io::read_file_or_empty(config_.audit_file))) out.push_back(std::move(l.text));
  if (out.size() > n) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace smartcourse::store
