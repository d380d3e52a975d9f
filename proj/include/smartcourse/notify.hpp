#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace smartcourse::store {
struct Account;
}

namespace smartcourse::notify {

namespace fs = std::filesystem;

enum class EventKind { NewRecommendation, EnrollmentConfirmation, GradePosting };

std::string_view kind_name(EventKind k) noexcept;
std::optional<EventKind> parse_kind(std::string_view text) noexcept;

using Payload = std::map<std::string, std::string>;

struct NotificationEvent {
  EventKind kind = EventKind::NewRecommendation;
  std::string recipient;
  Payload payload;
  std::int64_t created_at = 0;  // unix seconds
  std::string id;               // assigned on enqueue when empty

  bool operator==(const NotificationEvent&) const = default;
};

struct SmtpConfig {
  bool enabled = false;
  std::string host = "localhost";
  int port = 25;
  std::string username;
  std::string secret;
  std::string sender = "smartcourse@localhost";
  bool starttls = false;
  fs::path queue_file = "mail_queue.txt";
  fs::path dead_letter_file = "mail_dead_letter.txt";
  double retry_base_seconds = 1.0;  // backoff: base, 2*base, ...
  double poll_seconds = 5.0;
  double timeout_seconds = 10.0;
};

bool is_valid_recipient(std::string_view address) noexcept;

/// Receives academic/advising events. Implementations must not throw into
/// the caller's operation.
class EventSink {
 public:
  virtual ~EventSink() = default;
  virtual void publish(const NotificationEvent& event) = 0;
};

/// Builds an event for `account` and publishes it. Accounts without an email
/// are skipped with a log line. Never throws.
void notify_account(EventSink* sink, const store::Account& account, EventKind kind, Payload payload);

struct MailMessage {
  std::string from;
  std::string to;
  std::string subject;
  std::string body;
};

/// Replaces every {{key}} with payload[key]; unknown keys render empty.
std::string render_template(std::string_view tmpl, const Payload& payload);

MailMessage render_message(const NotificationEvent& event, std::string_view sender);

/// RFC 5322 text including headers, CRLF line endings.
std::string to_rfc5322(const MailMessage& message);

class MailTransport {
 public:
  virtual ~MailTransport() = default;
  /// Throws Error(SmtpUnreachable) on any delivery failure.
  virtual void send(const MailMessage& message) = 0;
};

/// libcurl-backed SMTP client; STARTTLS when configured.
class SmtpTransport : public MailTransport {
 public:
  explicit SmtpTransport(SmtpConfig config);
  void send(const MailMessage& message) override;

 private:
  SmtpConfig config_;
};

std::string format_queue_line(const NotificationEvent& event);
NotificationEvent parse_queue_line(std::string_view line);

struct DeadLetter {
  NotificationEvent event;
  int attempts = 0;
  std::string last_error;
};

struct DeliveryReport {
  std::vector<std::string> delivered;      // event ids
  std::vector<std::string> dead_lettered;  // event ids
  int attempts = 0;
  bool empty() const noexcept { return delivered.empty() && dead_lettered.empty(); }
};

/// Durable flat-file mail queue with a background delivery worker.
class Mailer : public EventSink {
 public:
  Mailer(SmtpConfig config, std::unique_ptr<MailTransport> transport);
  ~Mailer() override;

  /// Validates and appends the event to the queue file. When mail is
  /// disabled the event is logged and dropped. Throws InvalidRecipient.
  void enqueue(NotificationEvent event);

  void publish(const NotificationEvent& event) override;

  /// Tries each queued event up to three times with exponential backoff,
  /// removing delivered ones and moving exhausted ones to the dead-letter file.
  DeliveryReport deliver_pending();

  std::vector<NotificationEvent> pending() const;
  std::size_t queue_length() const { return pending().size(); }
  std::vector<DeadLetter> dead_letters() const;

  void start();
  void stop();

  const SmtpConfig& config() const noexcept { return config_; }

  static constexpr int kMaxAttempts = 3;

 private:
  void run();

  SmtpConfig config_;
  std::unique_ptr<MailTransport> transport_;
  std::mutex deliver_mutex_;
  std::mutex wake_mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
  bool kicked_ = false;
  std::thread worker_;
};

}  // namespace smartcourse::notify
