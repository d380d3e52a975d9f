#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"
#include "smartcourse/notify.hpp"
#include "smartcourse/store.hpp"
#include "support.hpp"

using namespace smartcourse;
using namespace smartcourse::notify;
using testsupport::TempDir;
using testsupport::uniform;

namespace {

class FakeTransport : public MailTransport {
 public:
  explicit FakeTransport(int failures_before_success = 0) : failures_(failures_before_success) {}
  void send(const MailMessage& m) override {
    std::lock_guard lk(mutex);
    ++calls;
    if (failures_ < 0) throw Error(Errc::SmtpUnreachable, "connection refused");
    if (failures_ > 0 && failures_--) throw Error(Errc::SmtpUnreachable, "connection refused");
    sent.push_back(m);
  }
  std::mutex mutex;
  std::vector<MailMessage> sent;
  int calls = 0;

 private:
  int failures_;
};

SmtpConfig enabled_config(const TempDir& dir) {
  SmtpConfig cfg;
  cfg.enabled = true;
  cfg.queue_file = dir / "queue.txt";
  cfg.dead_letter_file = dir / "dead.txt";
  cfg.retry_base_seconds = 0.001;
  cfg.poll_seconds = 0.05;
  return cfg;
}

NotificationEvent sample_event() {
  return {EventKind::EnrollmentConfirmation, "alice@example.edu",
          {{"username", "alice"}, {"code", "CPS 3340"}, {"title", "Database Systems"}}, 1700000000, ""};
}

std::string random_text() {
  static const std::string alphabet = "ab%|;=\n\r {}xyz\xc3\xa9";
  std::string s;
  for (int i = uniform(0, 12); i > 0; --i) s.push_back(alphabet[static_cast<std::size_t>(uniform(0, static_cast<int>(alphabet.size()) - 1))]);
  return s;
}

// Minimal single-connection-at-a-time SMTP server on loopback.
class SmtpSink {
 public:
  explicit SmtpSink(bool refuse_recipient) : refuse_(refuse_recipient) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    ::listen(fd_, 4);
    thread_ = std::thread([this] { serve(); });
  }
  ~SmtpSink() {
    stop_ = true;
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    thread_.join();
  }
  int port() const { return port_; }
  std::vector<std::string> messages() {
    std::lock_guard lk(mutex_);
    return messages_;
  }
  std::vector<std::string> commands() {
    std::lock_guard lk(mutex_);
    return commands_;
  }

 private:
  void serve() {
    while (!stop_) {
      int c = ::accept(fd_, nullptr, nullptr);
      if (c < 0) return;
      session(c);
      ::close(c);
    }
  }
  static void reply(int c, const std::string& s) { (void)!::write(c, s.data(), s.size()); }
  void session(int c) {
    reply(c, "220 sink ESMTP\r\n");
    std::string buf;
    bool in_data = false;
    char chunk[4096];
    while (true) {
      auto n = ::read(c, chunk, sizeof chunk);
      if (n <= 0) return;
      buf.append(chunk, static_cast<std::size_t>(n));
      while (true) {
        if (in_data) {
          auto end = buf.find("\r\n.\r\n");
          if (end == std::string::npos) break;
          {
            std::lock_guard lk(mutex_);
            messages_.push_back(buf.substr(0, end));
          }
          buf.erase(0, end + 5);
          in_data = false;
          reply(c, "250 queued\r\n");
          continue;
        }
        auto eol = buf.find("\r\n");
        if (eol == std::string::npos) break;
        std::string line = buf.substr(0, eol);
        buf.erase(0, eol + 2);
        {
          std::lock_guard lk(mutex_);
          commands_.push_back(line);
        }
        auto verb = line.substr(0, 4);
        if (verb == "EHLO" || verb == "HELO") reply(c, "250 sink\r\n");
        else if (verb == "MAIL") reply(c, "250 ok\r\n");
        else if (verb == "RCPT") reply(c, refuse_ ? "550 no such user\r\n" : "250 ok\r\n");
        else if (verb == "DATA") {
          reply(c, "354 go ahead\r\n");
          in_data = true;
        } else if (verb == "QUIT") {
          reply(c, "221 bye\r\n");
          return;
        } else reply(c, "250 ok\r\n");
      }
    }
  }

  bool refuse_;
  int fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  std::mutex mutex_;
  std::vector<std::string> messages_;
  std::vector<std::string> commands_;
};

}  // namespace

TEST_CASE("event kinds have stable names") {
  for (auto k : {EventKind::NewRecommendation, EventKind::EnrollmentConfirmation, EventKind::GradePosting})
    CHECK(parse_kind(kind_name(k)) == k);
  CHECK(kind_name(EventKind::GradePosting) == "grade_posting");
  CHECK_FALSE(parse_kind("other").has_value());
}

TEST_CASE("recipient validation") {
  CHECK(is_valid_recipient("alice@example.edu"));
  CHECK(is_valid_recipient("a.b+c@mail.kean.edu"));
  CHECK_FALSE(is_valid_recipient(""));
  CHECK_FALSE(is_valid_recipient("alice"));
  CHECK_FALSE(is_valid_recipient("alice@localhost"));
  CHECK_FALSE(is_valid_recipient("a b@example.edu"));
  CHECK_FALSE(is_valid_recipient("a@example.edu\r\nRCPT TO:<x@y.z>"));
  CHECK_FALSE(is_valid_recipient(std::string(250, 'a') + "@example.edu"));
}

TEST_CASE("queue lines round-trip arbitrary field content") {
  for (int trial = 0; trial < 500; ++trial) {
    NotificationEvent e;
    e.kind = static_cast<EventKind>(uniform(0, 2));
    e.recipient = "r" + random_text();
    e.id = random_text();
    e.created_at = uniform(0, 2000000000);
    for (int i = uniform(0, 4); i > 0; --i) e.payload[random_text()] = random_text();
    auto line = format_queue_line(e);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(parse_queue_line(line) == e);
  }
  CHECK_THROWS_AS(parse_queue_line("a|b|c"), Error);
  CHECK_THROWS_AS(parse_queue_line("id|nope|a@b.cd|1|"), Error);
  CHECK_THROWS_AS(parse_queue_line("id|grade_posting|a@b.cd|x|"), Error);
  CHECK_THROWS_AS(parse_queue_line("id|grade_posting|a@b.cd|1|novalue"), Error);
}

TEST_CASE("templates render payload fields") {
  CHECK(render_template("Hi {{ name }}, {{missing}}!", {{"name", "Al"}}) == "Hi Al, !");
  CHECK(render_template("open {{ never closed", {}) == "open {{ never closed");
  auto m = render_message(sample_event(), "noreply@example.edu");
  CHECK(m.to == "alice@example.edu");
  CHECK(m.from == "noreply@example.edu");
  CHECK(m.subject == "Enrollment confirmed: CPS 3340");
  CHECK(m.body.find("CPS 3340 Database Systems") != std::string::npos);
  auto wire = to_rfc5322(m);
  CHECK(wire.starts_with("From: noreply@example.edu\r\nTo: alice@example.edu\r\nSubject: "));
  CHECK(wire.find("\r\n\r\nHello alice,\r\n") != std::string::npos);
  auto bare = wire;
  for (std::size_t i = 0; i < bare.size(); ++i)
    if (bare[i] == '\n') CHECK((i > 0 && bare[i - 1] == '\r'));
}

TEST_CASE("enqueue validates, persists and delivers") {
  TempDir dir;
  auto transport = std::make_unique<FakeTransport>();
  auto* fake = transport.get();
  Mailer mailer(enabled_config(dir), std::move(transport));

  CHECK_THROWS_AS(mailer.enqueue({EventKind::GradePosting, "bad address", {}, 0, ""}), Error);
  mailer.publish({EventKind::GradePosting, "bad address", {}, 0, ""});  // swallowed
  CHECK(mailer.queue_length() == 0);

  mailer.enqueue(sample_event());
  mailer.enqueue({EventKind::GradePosting, "bob@example.edu", {{"code", "CPS 1231"}, {"grade", "A"}}, 0, ""});
  auto queued = mailer.pending();
  REQUIRE(queued.size() == 2);
  CHECK_FALSE(queued[0].id.empty());
  CHECK(queued[0].id != queued[1].id);
  CHECK(queued[1].created_at > 0);

  // A second mailer sees the same durable queue.
  Mailer reader(enabled_config(dir), std::make_unique<FakeTransport>());
  CHECK(reader.queue_length() == 2);

  auto report = mailer.deliver_pending();
  CHECK(report.delivered.size() == 2);
  CHECK(report.attempts == 2);
  CHECK(mailer.queue_length() == 0);
  REQUIRE(fake->sent.size() == 2);
  CHECK(fake->sent[1].subject == "Grade posted for CPS 1231");
  CHECK(mailer.deliver_pending().empty());
}

TEST_CASE("transient failures are retried and exhausted events are dead-lettered") {
  TempDir dir;
  SUBCASE("recovers on the third attempt") {
    auto transport = std::make_unique<FakeTransport>(2);
    auto* fake = transport.get();
    Mailer mailer(enabled_config(dir), std::move(transport));
    mailer.enqueue(sample_event());
    auto report = mailer.deliver_pending();
    CHECK(report.delivered.size() == 1);
    CHECK(report.attempts == 3);
    CHECK(fake->sent.size() == 1);
    CHECK(mailer.dead_letters().empty());
  }
  SUBCASE("gives up after three attempts") {
    auto transport = std::make_unique<FakeTransport>(-1);
    Mailer mailer(enabled_config(dir), std::move(transport));
    auto e = sample_event();
    e.payload["note"] = "pipes | and ; semis";
    mailer.enqueue(e);
    auto report = mailer.deliver_pending();
    CHECK(report.dead_lettered.size() == 1);
    CHECK(report.attempts == Mailer::kMaxAttempts);
    CHECK(mailer.queue_length() == 0);
    auto dead = mailer.dead_letters();
    REQUIRE(dead.size() == 1);
    CHECK(dead[0].attempts == 3);
    CHECK(dead[0].last_error.find("connection refused") != std::string::npos);
    CHECK(dead[0].event.payload.at("note") == "pipes | and ; semis");
  }
}

TEST_CASE("disabled mail drops events without touching the queue") {
  TempDir dir;
  auto cfg = enabled_config(dir);
  cfg.enabled = false;
  Mailer mailer(cfg, std::make_unique<FakeTransport>());
  mailer.enqueue(sample_event());
  CHECK_FALSE(fs::exists(cfg.queue_file));
  CHECK_THROWS_AS(mailer.enqueue({EventKind::GradePosting, "nope", {}, 0, ""}), Error);
}

TEST_CASE("notify_account skips accounts without email and never throws") {
  struct Throwing : EventSink {
    void publish(const NotificationEvent&) override { throw std::runtime_error("boom"); }
  } throwing;
  struct Recording : EventSink {
    std::vector<NotificationEvent> got;
    void publish(const NotificationEvent& e) override { got.push_back(e); }
  } recording;
  store::Account with{"alice", "", store::Role::Student, "CPS", "alice@example.edu"};
  store::Account without{"bob", "", store::Role::Student, "CPS", ""};
  notify_account(&recording, with, EventKind::NewRecommendation, {{"codes", "CPS 4150"}});
  notify_account(&recording, without, EventKind::NewRecommendation, {});
  notify_account(nullptr, with, EventKind::NewRecommendation, {});
  CHECK_NOTHROW(notify_account(&throwing, with, EventKind::NewRecommendation, {}));
  REQUIRE(recording.got.size() == 1);
  CHECK(recording.got[0].recipient == "alice@example.edu");
  CHECK(recording.got[0].created_at > 0);
}

TEST_CASE("background worker drains the queue and stops promptly") {
  TempDir dir;
  auto transport = std::make_unique<FakeTransport>();
  auto* fake = transport.get();
  Mailer mailer(enabled_config(dir), std::move(transport));
  mailer.start();
  mailer.start();  // idempotent
  mailer.enqueue(sample_event());
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (mailer.queue_length() > 0 && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  CHECK(mailer.queue_length() == 0);
  {
    std::lock_guard lk(fake->mutex);
    CHECK(fake->sent.size() == 1);
  }
  auto t0 = std::chrono::steady_clock::now();
  mailer.stop();
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
}

TEST_CASE("stop interrupts a retry backoff and keeps the event queued") {
  TempDir dir;
  auto cfg = enabled_config(dir);
  cfg.retry_base_seconds = 30;
  Mailer mailer(cfg, std::make_unique<FakeTransport>(-1));
  mailer.enqueue(sample_event());
  mailer.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  auto t0 = std::chrono::steady_clock::now();
  mailer.stop();
  CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(2));
  CHECK(mailer.queue_length() == 1);
  CHECK(mailer.dead_letters().empty());
}

TEST_CASE("SMTP transport speaks to a loopback server") {
  SUBCASE("accepting server receives the message") {
    SmtpSink sink(false);
    SmtpConfig cfg;
    cfg.host = "127.0.0.1";
    cfg.port = sink.port();
    cfg.timeout_seconds = 5;
    SmtpTransport transport(cfg);
    transport.send(render_message(sample_event(), "noreply@example.edu"));
    auto msgs = sink.messages();
    REQUIRE(msgs.size() == 1);
    CHECK(msgs[0].find("Subject: Enrollment confirmed: CPS 3340") != std::string::npos);
    bool saw_rcpt = false;
    for (const auto& c : sink.commands()) saw_rcpt |= c == "RCPT TO:<alice@example.edu>";
    CHECK(saw_rcpt);
  }
  SUBCASE("refused recipient surfaces as SmtpUnreachable") {
    SmtpSink sink(true);
    SmtpConfig cfg;
    cfg.host = "127.0.0.1";
    cfg.port = sink.port();
    cfg.timeout_seconds = 5;
    SmtpTransport transport(cfg);
    try {
      transport.send(render_message(sample_event(), "noreply@example.edu"));
      FAIL("expected SmtpUnreachable");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SmtpUnreachable);
    }
    CHECK(sink.messages().empty());
  }
}
