#include "smartcourse/app.hpp"

#include <spdlog/spdlog.h>

#include "smartcourse/course_code.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"

namespace smartcourse {

namespace {

std::unique_ptr<advisor::LlmRuntime> runtime_or_default(std::unique_ptr<advisor::LlmRuntime> runtime,
                                                        const config::Config& cfg) {
  if (runtime) return runtime;
  return advisor::make_runtime(cfg.advisor.runtime);
}

}  // namespace

std::string sanitize_field(std::string_view text) {
  std::string out(text);
  for (char& c : out)
    if (c == '|' || c == '\n' || c == '\r') c = ' ';
  return out;
}

App::App(config::Config cfg, std::unique_ptr<advisor::LlmRuntime> runtime,
         std::unique_ptr<notify::MailTransport> transport)
    : config_(std::move(cfg)),
      store_(config_.store),
      mailer_(config_.smtp, std::move(transport)),
      registrar_(store_, &mailer_),
      model_(config_.advisor),
      runtime_(runtime_or_default(std::move(runtime), config_)),
      advisor_(store_, *runtime_, model_, &mailer_) {}

void App::audit(std::string_view actor, std::string_view action, std::string_view detail) {
  try {
    store_.append_audit(io::utc_timestamp() + "|" + sanitize_field(actor) + "|" + sanitize_field(action) + "|" +
                        sanitize_field(detail));
  } catch (const std::exception& e) {
    spdlog::error("audit log write failed: {}", e.what());
  }
}

std::vector<store::Course> App::add_course(std::string_view actor, const store::Course& course) {
  auto canonical = canonical_code(course.code);
  if (!canonical) throw Error(Errc::InvalidCode, "malformed course code '" + course.code + "'");
  store::Course c = course;
  c.code = *canonical;
  auto result = store_.upsert_course(c);
  audit(actor, "add-course", c.code + " " + c.title + " " + std::to_string(c.credits));
  return result;
}

std::vector<store::Course> App::remove_course(std::string_view actor, std::string_view code) {
  auto result = store_.remove_course(code);
  audit(actor, "remove-course", canonical_code(code).value_or(std::string(code)));
  return result;
}

store::Account App::add_account(std::string_view actor, std::string_view username, std::string_view password,
                                store::Role role, std::string_view major, std::string_view email) {
  if (password.empty()) throw Error(Errc::InvalidValue, "password must be non-empty");
  if (!email.empty() && !notify::is_valid_recipient(email))
    throw Error(Errc::InvalidValue, "email address '" + std::string(email) + "' is malformed");
  if (store_.find_account(username))
    throw Error(Errc::InvalidValue, "account '" + std::string(username) + "' already exists");
  if (role == store::Role::Student) store_.load_plan(major);
  auto account = store_.create_account(username, password, role, major, email);
  audit(actor, "add-account", account.username + " " + std::string(store::role_name(role)));
  return account;
}

void App::reset_password(std::string_view actor, std::string_view username, std::string_view password) {
  if (password.empty()) throw Error(Errc::InvalidValue, "password must be non-empty");
  store_.reset_password(username, password);
  audit(actor, "reset-password", username);
}

void App::set_model(std::string_view actor, std::string_view name) {
  auto trimmed = io::trim(name);
  if (trimmed.empty() || trimmed.find_first_of("\n\r\"") != std::string_view::npos)
    throw Error(Errc::InvalidValue, "model name must be a non-empty single line");
  model_.set_model(std::string(trimmed));
  if (!config_.source_path.empty()) config::set_value(config_.source_path, "advisor", "model", trimmed);
  config_.advisor.model_name = std::string(trimmed);
  audit(actor, "set-model", trimmed);
}

}  // namespace smartcourse
