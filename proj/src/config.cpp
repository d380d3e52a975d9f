#include "smartcourse/config.hpp"

#include <charconv>
#include <cstdlib>

#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"

namespace smartcourse::config {

namespace {

[[noreturn]] void bad(std::size_t line, const std::string& why) {
  throw Error(Errc::ConfigError, "config line " + std::to_string(line) + ": " + why);
}

std::string parse_basic_string(std::string_view v, std::size_t line) {
  std::string out;
  for (std::size_t i = 1; i < v.size(); ++i) {
    char c = v[i];
    if (c == '"') {
      auto rest = io::trim(v.substr(i + 1));
      if (!rest.empty() && rest.front() != '#') bad(line, "trailing characters after string");
      return out;
    }
    if (c == '\\' && i + 1 < v.size()) {
      char e = v[++i];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: bad(line, "unsupported escape");
      }
      continue;
    }
    out.push_back(c);
  }
  bad(line, "unterminated string");
}

std::string strip_comment(std::string_view v) {
  auto hash = v.find('#');
  return std::string(io::trim(hash == std::string_view::npos ? v : v.substr(0, hash)));
}

std::string escape(std::string_view v) {
  std::string out;
  for (char c : v) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

const std::string* find(const Table& t, const std::string& key) {
  auto it = t.find(key);
  return it == t.end() ? nullptr : &it->second;
}

int get_int(const Table& t, const std::string& key, int fallback) {
  auto* v = find(t, key);
  if (!v) return fallback;
  int out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    throw Error(Errc::ConfigError, "config key '" + key + "' must be an integer");
  return out;
}

double get_double(const Table& t, const std::string& key, double fallback) {
  auto* v = find(t, key);
  if (!v) return fallback;
  double out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc{} || ptr != v->data() + v->size())
    throw Error(Errc::ConfigError, "config key '" + key + "' must be a number");
  return out;
}

bool get_bool(const Table& t, const std::string& key, bool fallback) {
  auto* v = find(t, key);
  if (!v) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw Error(Errc::ConfigError, "config key '" + key + "' must be true or false");
}

std::string get_string(const Table& t, const std::string& key, const std::string& fallback) {
  auto* v = find(t, key);
  return v ? *v : fallback;
}

}  // namespace

Table parse_toml(std::string_view text) {
  Table out;
  std::string section;
  std::size_t number = 0;
  for (const auto& raw : io::split(text, '\n')) {
    ++number;
    auto line = io::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      auto close = line.find(']');
      if (close == std::string_view::npos) bad(number, "unterminated section header");
      section = std::string(io::trim(line.substr(1, close - 1)));
      if (section.empty()) bad(number, "empty section name");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) bad(number, "expected key = value");
    auto key = std::string(io::trim(line.substr(0, eq)));
    auto value = io::trim(line.substr(eq + 1));
    if (key.empty()) bad(number, "empty key");
    std::string parsed = !value.empty() && value.front() == '"' ? parse_basic_string(value, number) : strip_comment(value);
    out[section.empty() ? key : section + "." + key] = parsed;
  }
  return out;
}

Config parse_config(std::string_view text, const fs::path& base_dir) {
  auto t = parse_toml(text);
  Config c;

  fs::path root = get_string(t, "store.root_dir", ".");
  if (root.is_relative()) root = base_dir / root;
  c.store.root_dir = root;
  c.store.accounts_file = get_string(t, "store.accounts_file", c.store.accounts_file.string());
  c.store.catalog_file = get_string(t, "store.catalog_file", c.store.catalog_file.string());
  c.store.ledger_file = get_string(t, "store.ledger_file", c.store.ledger_file.string());
  c.store.plan_dir = get_string(t, "store.plan_dir", c.store.plan_dir.string());
  c.store.history_file = get_string(t, "store.history_file", c.store.history_file.string());
  c.store.audit_file = get_string(t, "store.audit_file", c.store.audit_file.string());
  c.store.hash_iterations = get_int(t, "store.hash_iterations", c.store.hash_iterations);
  c.store = c.store.resolved();

  c.advisor.model_name = get_string(t, "advisor.model", c.advisor.model_name);
  c.advisor.runtime = get_string(t, "advisor.runtime", c.advisor.runtime);
  c.advisor.timeout_seconds = get_double(t, "advisor.timeout_seconds", c.advisor.timeout_seconds);
  if (!(c.advisor.timeout_seconds > 0)) throw Error(Errc::ConfigError, "advisor.timeout_seconds must be positive");
  for (const auto& [k, v] : t)
    if (k.starts_with("advisor.options.")) c.advisor.options[k.substr(16)] = v;

  c.smtp.enabled = get_bool(t, "smtp.enabled", c.smtp.enabled);
  c.smtp.host = get_string(t, "smtp.host", c.smtp.host);
  c.smtp.port = get_int(t, "smtp.port", c.smtp.port);
  if (c.smtp.port < 1 || c.smtp.port > 65535) throw Error(Errc::ConfigError, "smtp.port must be 1-65535");
  c.smtp.username = get_string(t, "smtp.username", c.smtp.username);
  c.smtp.secret = get_string(t, "smtp.password", c.smtp.secret);
  c.smtp.sender = get_string(t, "smtp.sender", c.smtp.sender);
  c.smtp.starttls = get_bool(t, "smtp.starttls", c.smtp.starttls);
  c.smtp.retry_base_seconds = get_double(t, "smtp.retry_base_seconds", c.smtp.retry_base_seconds);
  c.smtp.poll_seconds = get_double(t, "smtp.poll_seconds", c.smtp.poll_seconds);
  c.smtp.timeout_seconds = get_double(t, "smtp.timeout_seconds", c.smtp.timeout_seconds);
  auto under_root = [&](const std::string& key, const fs::path& fallback) {
    fs::path p = get_string(t, key, fallback.string());
    return (p.is_absolute() ? p : c.store.root_dir / p).lexically_normal();
  };
  c.smtp.queue_file = under_root("smtp.queue_file", c.smtp.queue_file);
  c.smtp.dead_letter_file = under_root("smtp.dead_letter_file", c.smtp.dead_letter_file);

  c.server.bind = get_string(t, "server.bind", c.server.bind);
  c.server.port = get_int(t, "server.port", c.server.port);
  if (c.server.port < 0 || c.server.port > 65535) throw Error(Errc::ConfigError, "server.port must be 0-65535");
  if (auto* dir = find(t, "server.static_dir"); dir && !dir->empty()) {
    fs::path p = *dir;
    c.server.static_dir = p.is_relative() ? (base_dir / p).lexically_normal() : p;
  }
  c.server.session_hours = get_double(t, "server.session_hours", c.server.session_hours);
  c.server.threads = get_int(t, "server.threads", c.server.threads);
  return c;
}

Config load_config(const fs::path& path) {
  auto text = io::read_file(path);
  auto base = fs::absolute(path).parent_path();
  auto c = parse_config(text, base);
  c.source_path = fs::absolute(path);
  return c;
}

fs::path resolve_config_path(std::string_view explicit_path) {
  if (!explicit_path.empty()) return fs::path(explicit_path);
  if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str()); env && *env) return fs::path(env);
  return fs::path("smartcourse.toml");
}

void set_value(const fs::path& path, std::string_view section, std::string_view key, std::string_view value) {
  io::WriteLock lock(path);
  auto lines = io::split(io::read_file_or_empty(path), '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::string rendered = std::string(key) + " = \"" + escape(value) + "\"";

  std::string current;
  std::ptrdiff_t section_end = -1;  // index after the last line of the target section
  bool replaced = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto t = io::trim(lines[i]);
    if (!t.empty() && t.front() == '[') {
      auto close = t.find(']');
      current = std::string(io::trim(t.substr(1, close == std::string_view::npos ? t.size() - 1 : close - 1)));
      if (current == section) section_end = static_cast<std::ptrdiff_t>(i) + 1;
      continue;
    }
    if (current != section) continue;
    section_end = static_cast<std::ptrdiff_t>(i) + 1;
    auto eq = t.find('=');
    if (eq != std::string_view::npos && io::trim(t.substr(0, eq)) == key) {
      lines[i] = rendered;
      replaced = true;
      break;
    }
  }
  if (!replaced) {
    if (section_end < 0) {
      if (!lines.empty() && !lines.back().empty()) lines.emplace_back();
      lines.push_back("[" + std::string(section) + "]");
      lines.push_back(rendered);
    } else {
      // Insert after the last non-blank line of the section.
      auto pos = section_end;
      while (pos > 0 && io::trim(lines[static_cast<std::size_t>(pos - 1)]).empty()) --pos;
      lines.insert(lines.begin() + pos, rendered);
    }
  }
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  io::atomic_write(path, out);
}

}  // namespace smartcourse::config
