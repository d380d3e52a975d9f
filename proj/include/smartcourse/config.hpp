#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "smartcourse/advisor.hpp"
#include "smartcourse/notify.hpp"
#include "smartcourse/store.hpp"

namespace smartcourse::config {

namespace fs = std::filesystem;

inline constexpr std::string_view kConfigEnvVar = "SMARTCOURSE_CONFIG";

/// Flat view of a TOML-style file: "section.key" -> raw string value.
/// Supports [section] / [a.b] headers, `key = value` with basic strings,
/// integers, floats and booleans, and '#' comments.
using Table = std::map<std::string, std::string>;

Table parse_toml(std::string_view text);

struct ServerConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
  fs::path static_dir;  // optional web client assets
  double session_hours = 24.0;
  int threads = 8;
};

struct Config {
  store::StoreConfig store;
  advisor::AdvisorConfig advisor;
  notify::SmtpConfig smtp;
  ServerConfig server;
  fs::path source_path;
};

/// Relative store.root_dir resolves against the config file's directory;
/// mail queue paths resolve under the store root.
Config load_config(const fs::path& path);
Config parse_config(std::string_view text, const fs::path& base_dir);

/// Explicit path, else $SMARTCOURSE_CONFIG, else ./smartcourse.toml.
fs::path resolve_config_path(std::string_view explicit_path);

/// Rewrites `key` inside `[section]` in place (appending when absent) and
/// leaves every other line untouched. Values are written as basic strings.
void set_value(const fs::path& path, std::string_view section, std::string_view key, std::string_view value);

}  // namespace smartcourse::config
