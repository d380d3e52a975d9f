#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <regex>

#include "httplib.h"
#include "json.hpp"
#include "smartcourse/advisor.hpp"
#include "smartcourse/error.hpp"

namespace smartcourse::advisor {

namespace {

using Clock = std::chrono::steady_clock;

nlohmann::json option_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  try {
    std::size_t used = 0;
    long long i = std::stoll(text, &used);
    if (used == text.size()) return i;
    double d = std::stod(text, &used);
    if (used == text.size()) return d;
  } catch (const std::exception&) {
  }
  return text;
}

/// Concatenates "response" fields from either one JSON object or NDJSON chunks.
std::string collect_response(const std::string& body) {
  std::string out;
  std::size_t start = 0;
  bool any = false;
  while (start < body.size()) {
    auto end = body.find('\n', start);
    if (end == std::string::npos) end = body.size();
    std::string_view line(body.data() + start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(Errc::RuntimeUnavailable, "runtime returned a non-JSON body");
    if (j.contains("error")) throw Error(Errc::RuntimeUnavailable, "runtime error: " + j["error"].dump());
    if (j.contains("response") && j["response"].is_string()) out += j["response"].get<std::string>();
    any = true;
  }
  if (!any) return {};
  return out;
}

std::vector<std::string> split_command(const std::string& tmpl, const std::string& model) {
  std::vector<std::string> args;
  std::string cur;
  bool in_arg = false;
  char quote = 0;
  for (char c : tmpl) {
    if (quote) {
      if (c == quote)
        quote = 0;
      else
        cur.push_back(c);
    } else if (c == '"' || c == '\'') {
      quote = c;
      in_arg = true;
    } else if (c == ' ' || c == '\t') {
      if (in_arg) args.push_back(std::move(cur));
      cur.clear();
      in_arg = false;
    } else {
      cur.push_back(c);
      in_arg = true;
    }
  }
  if (in_arg) args.push_back(std::move(cur));
  for (auto& a : args) {
    for (auto pos = a.find("{model}"); pos != std::string::npos; pos = a.find("{model}", pos + model.size()))
      a.replace(pos, 7, model);
  }
  return args;
}

}  // namespace

// HTTP --------------------------------------------------------------------

HttpRuntime::HttpRuntime(std::string url) : url_(std::move(url)) {
  static const std::regex re(R"(^(http)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url_, m, re))
    throw Error(Errc::ConfigError, "runtime URL must look like http://host:port/api/generate");
  scheme_host_port_ = "http://" + m[2].str() + ":" + (m[3].matched ? m[3].str() : std::string("80"));
  path_ = m[4].matched ? m[4].str() : std::string("/api/generate");
}

std::string HttpRuntime::complete(const std::string& prompt, const AdvisorConfig& cfg) {
  nlohmann::json body = {{"model", cfg.model_name}, {"prompt", prompt}, {"stream", false}};
  if (!cfg.options.empty()) {
    nlohmann::json opts = nlohmann::json::object();
    for (const auto& [k, v] : cfg.options) opts[k] = option_value(v);
    body["options"] = opts;
  }

  auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(cfg.timeout_seconds));
  auto deadline = Clock::now() + timeout;

  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                static_cast<long>(timeout.count() % 1000000));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                          static_cast<long>(timeout.count() % 1000000));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                           static_cast<long>(timeout.count() % 1000000));

  std::string received;
  bool expired = false;
  httplib::Request req;
  req.method = "POST";
  req.path = path_;
  req.set_header("Content-Type", "application/json");
  req.body = body.dump();
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    received.append(data, len);
    if (Clock::now() > deadline) {
      expired = true;
      return false;
    }
    return true;
  };

  auto res = client.send(req);
  if (!res) {
    auto err = res.error();
    if (expired || Clock::now() >= deadline || err == httplib::Error::ConnectionTimeout)
      throw Error(Errc::Timeout, "runtime did not answer within " + std::to_string(cfg.timeout_seconds) + " s");
    if (err == httplib::Error::Read && Clock::now() + std::chrono::milliseconds(50) >= deadline)
      throw Error(Errc::Timeout, "runtime read timed out");
    throw Error(Errc::RuntimeUnavailable, "runtime at " + url_ + " unreachable: " + httplib::to_string(err));
  }
  if (res->status != 200)
    throw Error(Errc::RuntimeUnavailable, "runtime answered HTTP " + std::to_string(res->status));
  return collect_response(received.empty() ? res->body : received);
}

// child process -----------------------------------------------------------

ProcessRuntime::ProcessRuntime(std::string command_template) : template_(std::move(command_template)) {
  if (split_command(template_, "").empty()) throw Error(Errc::ConfigError, "empty exec runtime command");
}

std::string ProcessRuntime::complete(const std::string& prompt, const AdvisorConfig& cfg) {
  auto args = split_command(template_, cfg.model_name);
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(Errc::RuntimeUnavailable, "pipe failed");
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(Errc::RuntimeUnavailable, "pipe failed");
  }
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw Error(Errc::RuntimeUnavailable, "pipe failed");
  }

  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw Error(Errc::RuntimeUnavailable, "fork failed");
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    int e = errno;
    [[maybe_unused]] auto n = ::write(err_pipe[1], &e, sizeof e);
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);

  int exec_errno = 0;
  bool exec_failed = ::read(err_pipe[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno;
  ::close(err_pipe[0]);

  int wfd = in_pipe[1];
  int rfd = out_pipe[0];
  ::fcntl(wfd, F_SETFL, O_NONBLOCK);
  ::signal(SIGPIPE, SIG_IGN);

  auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                     std::chrono::duration<double>(cfg.timeout_seconds));
  std::size_t written = 0;
  std::string output;
  bool timed_out = false;
  if (exec_failed) {
    ::close(wfd);
    wfd = -1;
  }
  if (wfd >= 0 && prompt.empty()) {
    ::close(wfd);
    wfd = -1;
  }
  while (rfd >= 0) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      timed_out = true;
      break;
    }
    pollfd fds[2];
    int nfds = 0;
    fds[nfds++] = {rfd, POLLIN, 0};
    if (wfd >= 0) fds[nfds++] = {wfd, POLLOUT, 0};
    int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long long>(remaining, 1000)));
    if (rc < 0 && errno != EINTR) break;
    if (rc <= 0) continue;
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[4096];
      ssize_t n = ::read(rfd, buf, sizeof buf);
      if (n > 0) {
        output.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EINTR) {
        ::close(rfd);
        rfd = -1;
      }
    }
    if (wfd >= 0 && nfds > 1 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      ssize_t n = ::write(wfd, prompt.data() + written, prompt.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
      if (n < 0 && errno != EAGAIN && errno != EINTR) written = prompt.size();
      if (written >= prompt.size()) {
        ::close(wfd);
        wfd = -1;
      }
    }
  }
  if (wfd >= 0) ::close(wfd);
  if (rfd >= 0) ::close(rfd);

  if (timed_out) ::kill(pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }

  if (exec_failed)
    throw Error(Errc::RuntimeUnavailable, "cannot run '" + args[0] + "': " + std::strerror(exec_errno));
  if (timed_out)
    throw Error(Errc::Timeout, "runtime process exceeded " + std::to_string(cfg.timeout_seconds) + " s");
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error(Errc::RuntimeUnavailable, "runtime process '" + args[0] + "' failed");
  return output;
}

}  // namespace smartcourse::advisor
