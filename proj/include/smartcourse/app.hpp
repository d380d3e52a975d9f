#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "smartcourse/academics.hpp"
#include "smartcourse/advisor.hpp"
#include "smartcourse/config.hpp"
#include "smartcourse/notify.hpp"
#include "smartcourse/store.hpp"

namespace smartcourse {

/// Owns one configured instance of every module. CLI commands and HTTP
/// handlers both go through here so identical inputs mutate identically.
class App {
 public:
  /// A null runtime is built from config.advisor.runtime; a null transport
  /// means real SMTP.
  explicit App(config::Config cfg, std::unique_ptr<advisor::LlmRuntime> runtime = nullptr,
               std::unique_ptr<notify::MailTransport> transport = nullptr);

  const config::Config& config() const noexcept { return config_; }
  store::Store& store() noexcept { return store_; }
  academics::Registrar& registrar() noexcept { return registrar_; }
  advisor::Advisor& advisor() noexcept { return advisor_; }
  advisor::ModelSettings& model() noexcept { return model_; }
  notify::Mailer& mailer() noexcept { return mailer_; }

  /// timestamp|actor|action|detail
  void audit(std::string_view actor, std::string_view action, std::string_view detail);

  // Admin operations shared by the CLI and the HTTP API.
  std::vector<store::Course> add_course(std::string_view actor, const store::Course& course);
  std::vector<store::Course> remove_course(std::string_view actor, std::string_view code);
  store::Account add_account(std::string_view actor, std::string_view username, std::string_view password,
                             store::Role role, std::string_view major, std::string_view email);
  void reset_password(std::string_view actor, std::string_view username, std::string_view password);
  /// Switches the model for subsequent calls and persists it to the config file.
  void set_model(std::string_view actor, std::string_view name);

 private:
  config::Config config_;
  store::Store store_;
  notify::Mailer mailer_;
  academics::Registrar registrar_;
  advisor::ModelSettings model_;
  std::unique_ptr<advisor::LlmRuntime> runtime_;
  advisor::Advisor advisor_;
};

std::string sanitize_field(std::string_view text);

}  // namespace smartcourse
