#include "smartcourse/notify.hpp"

#include <curl/curl.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <charconv>
#include <cstring>
#include <cmath>
#include <regex>
#include <set>

#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"
#include "smartcourse/store.hpp"

namespace smartcourse::notify {

namespace {

struct Template {
  std::string_view subject;
  std::string_view body;
};

Template template_for(EventKind kind) {
  switch (kind) {
    case EventKind::NewRecommendation:
      return {"New course recommendations",
              "Hello {{username}},\n\nYou asked: {{question}}\n\nRecommended courses: {{codes}}\n\n"
              "Log in to SmartCourse to enroll or ask a follow-up question.\n"};
    case EventKind::EnrollmentConfirmation:
      return {"Enrollment confirmed: {{code}}",
              "Hello {{username}},\n\nYou are now enrolled in {{code}} {{title}}.\n"};
    case EventKind::GradePosting:
      return {"Grade posted for {{code}}", "Hello {{username}},\n\nYour grade for {{code}} is {{grade}}.\n"};
  }
  return {"", ""};
}

std::string escape_field(std::string_view text) {
  static constexpr std::string_view special = "%|;=\n\r";
  std::string out;
  for (char c : text) {
    if (special.find(c) != std::string_view::npos) {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(c));
      out += buf;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      out += io::from_hex(text.substr(i + 1, 2));
      i += 2;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

std::string format_payload(const Payload& payload) {
  std::string out;
  for (const auto& [k, v] : payload) {
    if (!out.empty()) out += ";";
    out += escape_field(k) + "=" + escape_field(v);
  }
  return out;
}

Payload parse_payload(std::string_view text) {
  Payload out;
  if (text.empty()) return out;
  for (const auto& pair : io::split(text, ';')) {
    auto eq = pair.find('=');
    if (eq == std::string::npos) throw Error(Errc::CorruptRecord, "payload entry without '='");
    out[unescape_field(std::string_view(pair).substr(0, eq))] = unescape_field(std::string_view(pair).substr(eq + 1));
  }
  return out;
}

std::string new_event_id() {
  static std::atomic<unsigned> counter{0};
  return io::to_hex(store::random_salt(6)) + std::to_string(counter++);
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string_view kind_name(EventKind k) noexcept {
  switch (k) {
    case EventKind::NewRecommendation: return "new_recommendation";
    case EventKind::EnrollmentConfirmation: return "enrollment_confirmation";
    case EventKind::GradePosting: return "grade_posting";
  }
  return "new_recommendation";
}

std::optional<EventKind> parse_kind(std::string_view text) noexcept {
  for (auto k : {EventKind::NewRecommendation, EventKind::EnrollmentConfirmation, EventKind::GradePosting})
    if (kind_name(k) == text) return k;
  return std::nullopt;
}

bool is_valid_recipient(std::string_view address) noexcept {
  static const std::regex re(R"(^[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)+$)");
  return address.size() <= 254 && std::regex_match(address.begin(), address.end(), re);
}

void notify_account(EventSink* sink, const store::Account& account, EventKind kind, Payload payload) {
  if (!sink) return;
  if (account.email.empty()) {
    spdlog::info("no email on file for '{}'; dropping {} notification", account.username, kind_name(kind));
    return;
  }
  try {
    sink->publish({kind, account.email, std::move(payload), now_seconds(), {}});
  } catch (const std::exception& e) {
    spdlog::warn("notification for '{}' not queued: {}", account.username, e.what());
  }
}

std::string render_template(std::string_view tmpl, const Payload& payload) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    auto open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    auto key = io::trim(tmpl.substr(open + 2, close - open - 2));
    if (auto it = payload.find(std::string(key)); it != payload.end()) out += it->second;
    i = close + 2;
  }
  return out;
}

MailMessage render_message(const NotificationEvent& event, std::string_view sender) {
  auto t = template_for(event.kind);
  return {std::string(sender), event.recipient, render_template(t.subject, event.payload),
          render_template(t.body, event.payload)};
}

std::string to_rfc5322(const MailMessage& m) {
  std::string out = "From: " + m.from + "\r\nTo: " + m.to + "\r\nSubject: " + m.subject +
                    "\r\nMIME-Version: 1.0\r\nContent-Type: text/plain; charset=UTF-8\r\n\r\n";
  for (char c : m.body) {
    if (c == '\n')
      out += "\r\n";
    else
      out.push_back(c);
  }
  return out;
}

// SMTP --------------------------------------------------------------------

SmtpTransport::SmtpTransport(SmtpConfig config) : config_(std::move(config)) {
  static const bool initialized = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK; }();
  (void)initialized;
}

namespace {
struct UploadState {
  std::string data;
  std::size_t offset = 0;
};

std::size_t read_payload(char* buffer, std::size_t size, std::size_t nitems, void* userp) {
  auto* st = static_cast<UploadState*>(userp);
  std::size_t n = std::min(size * nitems, st->data.size() - st->offset);
  std::memcpy(buffer, st->data.data() + st->offset, n);
  st->offset += n;
  return n;
}
}  // namespace

void SmtpTransport::send(const MailMessage& message) {
  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), &curl_easy_cleanup);
  if (!curl) throw Error(Errc::SmtpUnreachable, "curl_easy_init failed");
  std::string url = "smtp://" + config_.host + ":" + std::to_string(config_.port);
  UploadState upload{to_rfc5322(message), 0};
  curl_slist* rcpt = curl_slist_append(nullptr, ("<" + message.to + ">").c_str());
  std::string from = "<" + message.from + ">";

  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_FROM, from.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_MAIL_RCPT, rcpt);
  curl_easy_setopt(curl.get(), CURLOPT_READFUNCTION, read_payload);
  curl_easy_setopt(curl.get(), CURLOPT_READDATA, &upload);
  curl_easy_setopt(curl.get(), CURLOPT_UPLOAD, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_NOSIGNAL, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_TIMEOUT_MS, static_cast<long>(config_.timeout_seconds * 1000));
  if (config_.starttls) curl_easy_setopt(curl.get(), CURLOPT_USE_SSL, static_cast<long>(CURLUSESSL_ALL));
  if (!config_.username.empty()) {
    curl_easy_setopt(curl.get(), CURLOPT_USERNAME, config_.username.c_str());
    curl_easy_setopt(curl.get(), CURLOPT_PASSWORD, config_.secret.c_str());
  }
  CURLcode rc = curl_easy_perform(curl.get());
  curl_slist_free_all(rcpt);
  if (rc != CURLE_OK)
    throw Error(Errc::SmtpUnreachable, std::string("SMTP delivery to ") + message.to + " failed: " + curl_easy_strerror(rc));
}

// queue format ------------------------------------------------------------

std::string format_queue_line(const NotificationEvent& e) {
  return escape_field(e.id) + "|" + std::string(kind_name(e.kind)) + "|" + escape_field(e.recipient) + "|" +
         std::to_string(e.created_at) + "|" + format_payload(e.payload);
}

NotificationEvent parse_queue_line(std::string_view line) {
  auto f = io::split(line, '|');
  if (f.size() != 5) throw Error(Errc::CorruptRecord, "queue line must have 5 fields");
  auto kind = parse_kind(f[1]);
  if (!kind) throw Error(Errc::CorruptRecord, "unknown event kind '" + f[1] + "'");
  std::int64_t created = 0;
  auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), created);
  if (ec != std::errc{}) throw Error(Errc::CorruptRecord, "bad created_at");
  return {*kind, unescape_field(f[2]), parse_payload(f[4]), created, unescape_field(f[0])};
}

// Mailer ------------------------------------------------------------------

Mailer::Mailer(SmtpConfig config, std::unique_ptr<MailTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (!transport_) transport_ = std::make_unique<SmtpTransport>(config_);
}

Mailer::~Mailer() { stop(); }

void Mailer::enqueue(NotificationEvent event) {
  if (!is_valid_recipient(event.recipient))
    throw Error(Errc::InvalidRecipient, "invalid recipient address '" + event.recipient + "'");
  if (!config_.enabled) {
    spdlog::info("mail disabled; dropped {} notification for {}", kind_name(event.kind), event.recipient);
    return;
  }
  if (event.id.empty()) event.id = new_event_id();
  if (event.created_at == 0) event.created_at = now_seconds();
  {
    io::WriteLock lock(config_.queue_file);
    io::append_line(config_.queue_file, format_queue_line(event));
  }
  {
    std::lock_guard lk(wake_mutex_);
    kicked_ = true;
  }
  wake_.notify_all();
}

void Mailer::publish(const NotificationEvent& event) {
  try {
    enqueue(event);
  } catch (const std::exception& e) {
    spdlog::warn("notification dropped: {}", e.what());
  }
}

std::vector<NotificationEvent> Mailer::pending() const {
  std::vector<NotificationEvent> out;
  for (const auto& l : io::record_lines(io::read_file_or_empty(config_.queue_file))) {
    try {
      out.push_back(parse_queue_line(l.text));
    } catch (const Error& e) {
      spdlog::warn("skipping corrupt queue line {}: {}", l.number, e.what());
    }
  }
  return out;
}

std::vector<DeadLetter> Mailer::dead_letters() const {
  std::vector<DeadLetter> out;
  for (const auto& l : io::record_lines(io::read_file_or_empty(config_.dead_letter_file))) {
    auto cut = l.text.size();
    // event fields, then |attempts|error
    auto last = l.text.rfind('|', cut);
    auto prev = last == std::string::npos ? std::string::npos : l.text.rfind('|', last - 1);
    if (prev == std::string::npos) continue;
    DeadLetter d;
    d.event = parse_queue_line(std::string_view(l.text).substr(0, prev));
    d.attempts = std::stoi(l.text.substr(prev + 1, last - prev - 1));
    d.last_error = unescape_field(std::string_view(l.text).substr(last + 1));
    out.push_back(std::move(d));
  }
  return out;
}

DeliveryReport Mailer::deliver_pending() {
  std::lock_guard deliver(deliver_mutex_);
  DeliveryReport report;
  auto batch = pending();
  if (batch.empty()) return report;

  std::set<std::string> done;
  for (const auto& event : batch) {
    auto message = render_message(event, config_.sender);
    std::string last_error;
    bool sent = false;
    bool interrupted = false;
    int attempts = 0;
    while (attempts < kMaxAttempts && !sent && !interrupted) {
      ++attempts;
      ++report.attempts;
      try {
        transport_->send(message);
        sent = true;
      } catch (const std::exception& e) {
        last_error = e.what();
        spdlog::warn("delivery attempt {} for event {} failed: {}", attempts, event.id, last_error);
        if (attempts < kMaxAttempts) {
          auto backoff = std::chrono::duration<double>(config_.retry_base_seconds * std::pow(2.0, attempts - 1));
          std::unique_lock lk(wake_mutex_);
          interrupted = wake_.wait_for(lk, backoff, [this] { return stopping_; });
        }
      }
    }
    if (sent) {
      report.delivered.push_back(event.id);
      done.insert(event.id);
    } else if (!interrupted) {
      io::WriteLock lock(config_.dead_letter_file);
      io::append_line(config_.dead_letter_file,
                      format_queue_line(event) + "|" + std::to_string(attempts) + "|" + escape_field(last_error));
      report.dead_lettered.push_back(event.id);
      done.insert(event.id);
    }
  }

  io::WriteLock lock(config_.queue_file);
  std::string remaining;
  for (const auto& l : io::record_lines(io::read_file_or_empty(config_.queue_file))) {
    try {
      if (done.contains(parse_queue_line(l.text).id)) continue;
    } catch (const Error&) {
    }
    remaining += l.text + "\n";
  }
  io::atomic_write(config_.queue_file, remaining);
  return report;
}

void Mailer::start() {
  if (worker_.joinable()) return;
  {
    std::lock_guard lk(wake_mutex_);
    stopping_ = false;
  }
  worker_ = std::thread([this] { run(); });
}

void Mailer::stop() {
  {
    std::lock_guard lk(wake_mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  if (worker_.joinable()) worker_.join();
}

void Mailer::run() {
  while (true) {
    {
      std::unique_lock lk(wake_mutex_);
      wake_.wait_for(lk, std::chrono::duration<double>(config_.poll_seconds), [this] { return stopping_ || kicked_; });
      if (stopping_) return;
      kicked_ = false;
    }
    try {
      deliver_pending();
    } catch (const std::exception& e) {
      spdlog::error("mail delivery pass failed: {}", e.what());
    }
  }
}

}  // namespace smartcourse::notify
