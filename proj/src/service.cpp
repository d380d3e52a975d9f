#include "smartcourse/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <json.hpp>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "smartcourse/course_code.hpp"
#include "smartcourse/io.hpp"

namespace smartcourse::service {

using json = nlohmann::json;

namespace {

constexpr std::array kRoutes{
    Route{"GET", "/healthz", Access::Public},
    Route{"POST", "/api/login", Access::Public},
    Route{"POST", "/api/logout", Access::AnyAccount},
    Route{"GET", "/api/courses", Access::AnyAccount},
    Route{"POST", "/api/courses", Access::Administrator},
    Route{"DELETE", "/api/courses/{code}", Access::Administrator},
    Route{"POST", "/api/enrollments", Access::Student},
    Route{"DELETE", "/api/enrollments/{code}", Access::Student},
    Route{"GET", "/api/progress", Access::Student},
    Route{"GET", "/api/gpa", Access::Student},
    Route{"POST", "/api/advise", Access::Student},
    Route{"GET", "/api/advise/history", Access::Student},
    Route{"POST", "/api/grades", Access::Instructor},
    Route{"GET", "/api/students/{id}/records", Access::Instructor},
    Route{"GET", "/api/accounts", Access::Administrator},
    Route{"GET", "/api/logs", Access::Administrator},
    Route{"GET", "/api/model", Access::Administrator},
    Route{"PUT", "/api/model", Access::Administrator},
};

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Session {
  std::string username;
  std::chrono::steady_clock::time_point expires;
};

struct Ctx {
  const httplib::Request& req;
  httplib::Response& res;
  std::optional<store::Account> account;
  std::string token;
  int status = 200;
  std::string actor;  // overrides the session user in the audit line
};

using Handler = std::function<json(Ctx&)>;

json parse_body(const httplib::Request& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    throw BadRequest("request body must be JSON");
  }
  if (!body.is_object()) throw BadRequest("request body must be a JSON object");
  return body;
}

std::string str_field(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) throw BadRequest(std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

std::string opt_str_field(const json& body, const char* key, std::string fallback = {}) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw BadRequest(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string http_pattern(std::string_view path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] == '{') {
      auto close = path.find('}', i);
      out += ":" + std::string(path.substr(i + 1, close - i - 1));
      i = close;
    } else {
      out.push_back(path[i]);
    }
  }
  return out;
}

json transcript_json(const std::vector<academics::TranscriptEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries) out.push_back({{"code", e.code}, {"grade", std::string(grade_symbol(e.grade))}});
  return out;
}

json progress_json(const academics::ProgressSnapshot& s) {
  return {
      {"username", s.username},
      {"completed", transcript_json(s.completed)},
      {"outstanding", s.outstanding},
      {"low_grade", s.low_grade},
      {"in_progress", s.in_progress},
      {"not_started", s.not_started()},
  };
}

json ledger_json(const std::vector<store::LedgerEntry>& entries) {
  json out = json::array();
  for (const auto& e : entries)
    out.push_back({{"code", e.code}, {"grade", e.grade ? json(std::string(grade_symbol(*e.grade))) : json(nullptr)}});
  return out;
}

json gpa_or_null(academics::Registrar& registrar, std::string_view student) {
  try {
    return registrar.gpa(student);
  } catch (const Error& e) {
    if (e.code() == Errc::NoCompletedCourses) return nullptr;
    throw;
  }
}

std::string path_code(const Ctx& ctx) {
  auto raw = ctx.req.path_params.at("code");
  auto code = canonical_code(raw);
  if (!code) throw Error(Errc::InvalidCode, "malformed course code '" + raw + "'");
  return *code;
}

}  // namespace

std::span<const Route> routes() { return kRoutes; }

bool permits(Access access, std::optional<store::Role> role) noexcept {
  switch (access) {
    case Access::Public: return true;
    case Access::AnyAccount: return role.has_value();
    case Access::Student: return role == store::Role::Student;
    case Access::Instructor: return role == store::Role::Instructor;
    case Access::Administrator: return role == store::Role::Administrator;
  }
  return false;
}

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidCredentials:
    case Errc::Unauthorized: return 401;
    case Errc::Forbidden: return 403;
    case Errc::NotFound:
    case Errc::UnknownCourse:
    case Errc::UnknownStudent:
    case Errc::UnknownMajor: return 404;
    case Errc::DuplicateEnrollment:
    case Errc::NotEnrolled: return 409;
    case Errc::InvalidCode:
    case Errc::InvalidValue:
    case Errc::InvalidGrade:
    case Errc::NoCompletedCourses:
    case Errc::EmptyQuestion:
    case Errc::InvalidRecipient:
    case Errc::InvalidSets: return 422;
    case Errc::Timeout:
    case Errc::RuntimeUnavailable:
    case Errc::SmtpUnreachable: return 503;
    default: return 500;
  }
}

struct Server::Impl {
  explicit Impl(App& a) : app(a) {}

  App& app;
  httplib::Server http;
  std::thread thread;
  std::mutex sessions_mutex;
  std::unordered_map<std::string, Session> sessions;

  std::optional<std::pair<std::string, store::Account>> session_for(const httplib::Request& req) {
    auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (!header.starts_with(prefix)) return std::nullopt;
    std::string token = header.substr(prefix.size());
    std::string username;
    {
      std::lock_guard lock(sessions_mutex);
      auto it = sessions.find(token);
      if (it == sessions.end()) return std::nullopt;
      if (it->second.expires <= std::chrono::steady_clock::now()) {
        sessions.erase(it);
        return std::nullopt;
      }
      username = it->second.username;
    }
    auto account = app.store().find_account(username);
    if (!account) return std::nullopt;
    return std::make_pair(token, *account);
  }

  void add(std::string_view method, std::string_view path, Handler handler) {
    const Route* route = nullptr;
    for (const auto& r : kRoutes)
      if (r.method == method && r.path == path) route = &r;
    if (!route) throw std::logic_error("route missing from table: " + std::string(path));

    auto wrapped = [this, route, handler = std::move(handler)](const httplib::Request& req,
                                                                httplib::Response& res) {
      Ctx ctx{req, res, std::nullopt, {}, 200, {}};
      std::string actor = "-";
      json body;
      int status = 200;
      try {
        if (auto s = session_for(req)) {
          ctx.token = s->first;
          ctx.account = s->second;
          actor = ctx.account->username;
        }
        if (route->access != Access::Public) {
          if (!ctx.account) throw Error(Errc::Unauthorized, "missing or expired session");
          if (!permits(route->access, ctx.account->role))
            throw Error(Errc::Forbidden, "role " + std::string(store::role_name(ctx.account->role)) +
                                             " may not call " + std::string(route->method) + " " +
                                             std::string(route->path));
        }
        body = handler(ctx);
        status = ctx.status;
      } catch (const Error& e) {
        status = http_status(e.code());
        body = {{"error", std::string(errc_name(e.code()))}, {"message", e.what()}};
      } catch (const BadRequest& e) {
        status = 400;
        body = {{"error", "bad_request"}, {"message", e.what()}};
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        status = 500;
        body = {{"error", "internal"}, {"message", e.what()}};
      }
      if (!ctx.actor.empty()) actor = ctx.actor;
      res.status = status;
      res.set_content(body.dump(), "application/json");
      std::string detail = std::to_string(status);
      if (body.is_object() && body.contains("error")) detail += " " + body["error"].get<std::string>();
      app.audit(actor, std::string(route->method) + " " + req.path, detail);
    };

    auto pattern = http_pattern(path);
    if (method == "GET") http.Get(pattern, wrapped);
    else if (method == "POST") http.Post(pattern, wrapped);
    else if (method == "PUT") http.Put(pattern, wrapped);
    else if (method == "DELETE") http.Delete(pattern, wrapped);
    else throw std::logic_error("unsupported method");
  }

  void register_routes() {
    add("GET", "/healthz", [](Ctx&) { return json{{"status", "ok"}}; });

    add("POST", "/api/login", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      auto username = str_field(body, "username");
      ctx.actor = username;
      auto account = app.store().authenticate(username, str_field(body, "password"));
      auto token = io::to_hex(store::random_salt(16));
      double hours = app.config().server.session_hours;
      auto ttl = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double, std::ratio<3600>>(hours));
      {
        std::lock_guard lock(sessions_mutex);
        sessions[token] = Session{account.username, std::chrono::steady_clock::now() + ttl};
      }
      return json{{"token", token},
                  {"username", account.username},
                  {"role", std::string(store::role_name(account.role))},
                  {"major", account.major},
                  {"expires_in_seconds", static_cast<long long>(hours * 3600)}};
    });

    add("POST", "/api/logout", [this](Ctx& ctx) {
      std::lock_guard lock(sessions_mutex);
      sessions.erase(ctx.token);
      return json{{"logged_out", true}};
    });

    add("GET", "/api/courses", [this](Ctx&) {
      json out = json::array();
      for (const auto& c : app.store().catalog())
        out.push_back({{"code", c.code}, {"title", c.title}, {"credits", c.credits}});
      return out;
    });

    add("POST", "/api/courses", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      store::Course c{str_field(body, "code"), str_field(body, "title"), 3};
      if (auto it = body.find("credits"); it != body.end()) {
        if (!it->is_number_integer()) throw BadRequest("field 'credits' must be an integer");
        c.credits = it->get<int>();
      }
      auto catalog = app.add_course(ctx.account->username, c);
      ctx.status = 201;
      auto code = *canonical_code(c.code);
      for (const auto& course : catalog)
        if (course.code == code)
          return json{{"code", course.code}, {"title", course.title}, {"credits", course.credits}};
      return json{{"code", code}};
    });

    add("DELETE", "/api/courses/{code}", [this](Ctx& ctx) {
      auto code = path_code(ctx);
      app.remove_course(ctx.account->username, code);
      return json{{"removed", code}};
    });

    add("POST", "/api/enrollments", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      auto entry = app.registrar().enroll(*ctx.account, str_field(body, "code"));
      ctx.status = 201;
      return json{{"username", entry.username}, {"code", entry.code}, {"status", "in_progress"}};
    });

    add("DELETE", "/api/enrollments/{code}", [this](Ctx& ctx) {
      auto code = path_code(ctx);
      app.registrar().drop(*ctx.account, code);
      return json{{"dropped", code}};
    });

    add("GET", "/api/progress", [this](Ctx& ctx) {
      return progress_json(app.registrar().progress(ctx.account->username));
    });

    add("GET", "/api/gpa", [this](Ctx& ctx) {
      return json{{"username", ctx.account->username}, {"gpa", app.registrar().gpa(ctx.account->username)}};
    });

    add("POST", "/api/advise", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      auto question = str_field(body, "question");
      auto mode_text = opt_str_field(body, "mode", "full");
      auto mode = parse_mode(mode_text);
      if (!mode) throw Error(Errc::InvalidValue, "unknown mode '" + mode_text + "'");
      auto rec = app.advisor().advise(ctx.account->username, question, *mode);
      return json{{"mode", std::string(mode_name(rec.mode))},
                  {"reply_text", rec.source_reply.text},
                  {"codes", rec.codes},
                  {"removed", rec.removed},
                  {"latency_s", rec.source_reply.latency_seconds},
                  {"model", app.model().get().model_name}};
    });

    add("GET", "/api/advise/history", [this](Ctx& ctx) {
      json out = json::array();
      for (const auto& line : app.store().history_lines()) {
        auto f = io::split(line, '|');
        if (f.size() != 6 || f[1] != ctx.account->username) continue;
        json codes = json::array();
        for (const auto& c : io::split(f[4], ','))
          if (!c.empty()) codes.push_back(c);
        double latency = 0;
        try {
          latency = std::stod(f[5]);
        } catch (const std::exception&) {
        }
        out.push_back({{"timestamp", f[0]}, {"mode", f[2]}, {"question_hash", f[3]}, {"codes", codes},
                       {"latency_s", latency}});
      }
      return out;
    });

    add("POST", "/api/grades", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      auto student = str_field(body, "student");
      auto code = str_field(body, "code");
      auto grade = str_field(body, "grade");
      auto transcript = app.registrar().assign_grade(*ctx.account, student, code, grade);
      return json{{"student", student},
                  {"code", canonical_code(code).value_or(code)},
                  {"grade", grade},
                  {"transcript", transcript_json(transcript)}};
    });

    add("GET", "/api/students/{id}/records", [this](Ctx& ctx) {
      auto student = app.registrar().require_student(ctx.req.path_params.at("id"));
      return json{{"username", student.username},
                  {"major", student.major},
                  {"ledger", ledger_json(app.store().ledger_for(student.username))},
                  {"progress", progress_json(app.registrar().progress(student.username))},
                  {"gpa", gpa_or_null(app.registrar(), student.username)}};
    });

    add("GET", "/api/accounts", [this](Ctx&) {
      json out = json::array();
      for (const auto& a : app.store().accounts())
        out.push_back({{"username", a.username},
                       {"role", std::string(store::role_name(a.role))},
                       {"major", a.major},
                       {"email", a.email}});
      return out;
    });

    add("GET", "/api/logs", [this](Ctx& ctx) {
      std::size_t tail = 100;
      if (ctx.req.has_param("tail")) {
        try {
          tail = static_cast<std::size_t>(std::stoul(ctx.req.get_param_value("tail")));
        } catch (const std::exception&) {
          throw BadRequest("tail must be a non-negative integer");
        }
      }
      return json{{"lines", app.store().audit_tail(tail)}};
    });

    add("GET", "/api/model", [this](Ctx&) {
      return json{{"name", app.model().get().model_name}, {"runtime", app.advisor().runtime().describe()}};
    });

    add("PUT", "/api/model", [this](Ctx& ctx) {
      auto body = parse_body(ctx.req);
      app.set_model(ctx.account->username, str_field(body, "name"));
      return json{{"name", app.model().get().model_name}};
    });

    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty())
        res.set_content(json{{"error", res.status == 404 ? "not_found" : "error"},
                             {"message", httplib::status_message(res.status)}}
                            .dump(),
                        "application/json");
    });
  }
};

Server::Server(App& app) : impl_(std::make_unique<Impl>(app)) {
  int threads = std::max(1, app.config().server.threads);
  impl_->http.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
  impl_->register_routes();
  const auto& dir = app.config().server.static_dir;
  if (!dir.empty()) {
    if (!impl_->http.set_mount_point("/", dir.string()))
      spdlog::warn("static directory {} not found; serving API only", dir.string());
  }
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->http.bind_to_any_port(host) : (impl_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Server::run() { impl_->http.listen_after_bind(); }

int Server::start(const std::string& host, int port) {
  int bound = bind(host, port);
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace smartcourse::service
