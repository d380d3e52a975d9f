#include "smartcourse/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>
#include <stdexcept>

#include "smartcourse/app.hpp"
#include "smartcourse/course_code.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/evalharness.hpp"
#include "smartcourse/io.hpp"
#include "smartcourse/service.hpp"

namespace smartcourse::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<ContextMode> parse_modes(const std::string& text) {
  std::vector<ContextMode> out;
  for (const auto& part : io::split(text, ',')) {
    auto name = io::trim(part);
    auto mode = parse_mode(name);
    if (!mode) throw UsageError("unknown mode '" + std::string(name) + "' (expected full, noTranscript, noPlan, question)");
    for (auto m : out)
      if (m == *mode) throw UsageError("mode '" + std::string(name) + "' given twice");
    out.push_back(*mode);
  }
  if (out.empty()) throw UsageError("--modes needs at least one mode");
  return out;
}

store::Role parse_role_or_usage(const std::string& text) {
  auto role = store::parse_role(text);
  if (!role) throw UsageError("unknown role '" + text + "' (expected student, instructor, administrator)");
  return *role;
}

std::string read_secret(std::istream& in, std::ostream& err, const std::string& given) {
  if (!given.empty()) return given;
  err << "password: " << std::flush;
  std::string line;
  if (!std::getline(in, line)) throw UsageError("no password given");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void print_courses(App& app, std::ostream& out) {
  for (const auto& c : app.store().catalog()) out << c.code << "|" << c.title << "|" << c.credits << "\n";
}

void print_accounts(App& app, std::ostream& out) {
  for (const auto& a : app.store().accounts())
    out << a.username << "|" << store::role_name(a.role) << "|" << a.major << "|" << a.email << "\n";
}

void print_logs(App& app, std::ostream& out, std::size_t tail) {
  for (const auto& line : app.store().audit_tail(tail)) out << line << "\n";
}

constexpr std::string_view kActor = "cli";

std::string ask(std::istream& in, std::ostream& out, std::string_view label) {
  out << label << ": " << std::flush;
  std::string line;
  if (!std::getline(in, line)) throw UsageError("unexpected end of input");
  return std::string(io::trim(line));
}

int run_shell(App& app, std::istream& in, std::ostream& out, std::ostream& err) {
  static constexpr std::string_view kMenu =
      "\n1) List courses\n2) Add course\n3) Remove course\n4) List accounts\n5) Add account\n"
      "6) Reset password\n7) Set model\n8) Show logs\n0) Quit\n";
  while (true) {
    out << kMenu << "> " << std::flush;
    std::string choice;
    if (!std::getline(in, choice)) return kExitOk;
    auto c = io::trim(choice);
    try {
      if (c == "0" || c == "q") return kExitOk;
      if (c == "1") {
        print_courses(app, out);
      } else if (c == "2") {
        auto code = ask(in, out, "code");
        auto title = ask(in, out, "title");
        auto credits = ask(in, out, "credits");
        int n = 0;
        try {
          n = std::stoi(credits);
        } catch (const std::exception&) {
          throw Error(Errc::InvalidValue, "credits must be an integer");
        }
        app.add_course(kActor, store::Course{code, title, n});
        out << "saved\n";
      } else if (c == "3") {
        app.remove_course(kActor, ask(in, out, "code"));
        out << "removed\n";
      } else if (c == "4") {
        print_accounts(app, out);
      } else if (c == "5") {
        auto user = ask(in, out, "username");
        auto role = parse_role_or_usage(ask(in, out, "role"));
        auto major = ask(in, out, "major");
        auto email = ask(in, out, "email");
        auto pw = ask(in, out, "password");
        app.add_account(kActor, user, pw, role, major, email);
        out << "created\n";
      } else if (c == "6") {
        auto user = ask(in, out, "username");
        app.reset_password(kActor, user, ask(in, out, "password"));
        out << "updated\n";
      } else if (c == "7") {
        app.set_model(kActor, ask(in, out, "model"));
        out << "model set to " << app.model().get().model_name << "\n";
      } else if (c == "8") {
        print_logs(app, out, 20);
      } else {
        err << "unknown choice '" << c << "'\n";
      }
    } catch (const Error& e) {
      err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n";
      if (!in) return kExitOk;
    }
  }
}

int serve(App& app, const std::string& host, int port, std::ostream& out) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  app.mailer().start();
  service::Server server(app);
  int bound = server.start(host, port);
  out << "listening on http://" << host << ":" << bound << std::endl;
  spdlog::info("model {} via {}", app.model().get().model_name, app.advisor().runtime().describe());
  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {} received, shutting down", sig);
  server.stop();
  app.mailer().stop();
  return kExitOk;
}

}  // namespace

std::string synopsis() {
  return "usage: smartcourse [--config PATH] <command>\n"
         "  serve [--bind HOST] [--port N] [--runtime LOCATOR]\n"
         "  eval --queries FILE --student USER --modes full,noPlan,noTranscript,question\n"
         "       --seed N --out PATH --format csv|markdown [--iterations N] [--runtime LOCATOR]\n"
         "  admin add-course CODE TITLE CREDITS\n"
         "  admin remove-course CODE\n"
         "  admin list-courses\n"
         "  admin add-account USER ROLE [--major M] [--email E] [--password P]\n"
         "  admin list-accounts\n"
         "  admin reset-password USER [--password P]\n"
         "  admin set-model NAME\n"
         "  admin logs [--tail N]\n"
         "  admin shell\n";
}

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Course advising service and evaluation harness", "smartcourse"};
  cli.require_subcommand(1);
  cli.fallthrough();
  std::string config_path;
  cli.add_option("--config", config_path, "Configuration file (default: $SMARTCOURSE_CONFIG or ./smartcourse.toml)");

  std::string runtime_locator;

  auto* serve_cmd = cli.add_subcommand("serve", "Run the HTTP API");
  std::string bind_host;
  int port = -1;
  serve_cmd->add_option("--bind", bind_host, "Interface to bind");
  serve_cmd->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--runtime", runtime_locator, "Override advisor.runtime");

  auto* eval_cmd = cli.add_subcommand("eval", "Run the context ablation and write a report");
  std::string queries, student, modes_text, out_path, format = "csv";
  std::uint64_t seed = 0;
  int iterations = metrics::kBootstrapIterations;
  double timeout = 0;
  eval_cmd->add_option("--queries", queries, "Query file (id|question)")->required();
  eval_cmd->add_option("--student", student, "Student username")->required();
  eval_cmd->add_option("--modes", modes_text, "Comma-separated modes")->required();
  eval_cmd->add_option("--seed", seed, "Bootstrap seed")->required();
  eval_cmd->add_option("--out", out_path, "Report path")->required();
  eval_cmd->add_option("--format", format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
  eval_cmd->add_option("--iterations", iterations, "Bootstrap resamples")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--runtime", runtime_locator, "Override advisor.runtime");
  eval_cmd->add_option("--timeout", timeout, "Override advisor.timeout_seconds")->check(CLI::PositiveNumber);

  auto* admin = cli.add_subcommand("admin", "Administrative commands");
  admin->require_subcommand(1);
  std::string a_code, a_title, a_user, a_role, a_major, a_email, a_password, a_model;
  int a_credits = 0;
  std::size_t a_tail = 20;
  auto* add_course = admin->add_subcommand("add-course", "Add or update a catalog course");
  add_course->add_option("code", a_code)->required();
  add_course->add_option("title", a_title)->required();
  add_course->add_option("credits", a_credits)->required();
  auto* remove_course = admin->add_subcommand("remove-course", "Remove a catalog course");
  remove_course->add_option("code", a_code)->required();
  auto* list_courses = admin->add_subcommand("list-courses", "Print the catalog");
  auto* add_account = admin->add_subcommand("add-account", "Create an account");
  add_account->add_option("username", a_user)->required();
  add_account->add_option("role", a_role)->required();
  add_account->add_option("--major", a_major);
  add_account->add_option("--email", a_email);
  add_account->add_option("--password", a_password, "Read from stdin when omitted");
  auto* list_accounts = admin->add_subcommand("list-accounts", "Print accounts");
  auto* reset = admin->add_subcommand("reset-password", "Set a new password");
  reset->add_option("username", a_user)->required();
  reset->add_option("--password", a_password, "Read from stdin when omitted");
  auto* set_model = admin->add_subcommand("set-model", "Switch the advising model");
  set_model->add_option("name", a_model)->required();
  auto* logs = admin->add_subcommand("logs", "Print the audit log tail");
  logs->add_option("--tail", a_tail);
  auto* shell = admin->add_subcommand("shell", "Interactive menu");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    cli.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << cli.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << synopsis();
    return kExitUsage;
  }

  try {
    auto path = config::resolve_config_path(config_path);
    auto cfg = config::load_config(path);
    if (!runtime_locator.empty()) cfg.advisor.runtime = runtime_locator;
    if (timeout > 0) cfg.advisor.timeout_seconds = timeout;

    if (*serve_cmd) {
      if (!bind_host.empty()) cfg.server.bind = bind_host;
      if (port >= 0) cfg.server.port = port;
      std::string host = cfg.server.bind;
      int p = cfg.server.port;
      App app(std::move(cfg));
      return serve(app, host, p, out);
    }

    if (*eval_cmd) {
      if (!std::getenv("SMARTCOURSE_LOG")) spdlog::set_level(spdlog::level::warn);
      auto modes = parse_modes(modes_text);
      auto query_set = eval::load_queries(queries);
      std::unique_ptr<advisor::LlmRuntime> runtime;
      if (cfg.advisor.runtime == "stub:plan-parrot") {
        store::Store probe(cfg.store);
        academics::Registrar registrar(probe);
        auto snapshot = registrar.progress(student);
        runtime = advisor::make_runtime(cfg.advisor.runtime,
                                        std::vector<std::string>(snapshot.outstanding.begin(), snapshot.outstanding.end()));
      }
      App app(std::move(cfg), std::move(runtime));
      auto report = eval::run_ablation(query_set, student, modes, app.advisor(), app.model().get(),
                                              eval::AblationOptions{seed, iterations});
      auto fmt_kind = format == "markdown" ? eval::ReportFormat::Markdown : eval::ReportFormat::Csv;
      eval::emit_report(report, fmt_kind, out_path);
      out << eval::render_markdown(report.rows);
      out << "wrote " << out_path << "\n";
      return kExitOk;
    }

    App app(std::move(cfg));
    if (*add_course) {
      app.add_course(kActor, store::Course{a_code, a_title, a_credits});
      out << "saved " << canonical_code(a_code).value_or(a_code) << "\n";
    } else if (*remove_course) {
      app.remove_course(kActor, a_code);
      out << "removed " << canonical_code(a_code).value_or(a_code) << "\n";
    } else if (*list_courses) {
      print_courses(app, out);
    } else if (*add_account) {
      auto role = parse_role_or_usage(a_role);
      auto pw = read_secret(in, err, a_password);
      app.add_account(kActor, a_user, pw, role, a_major, a_email);
      out << "created " << a_user << "\n";
    } else if (*list_accounts) {
      print_accounts(app, out);
    } else if (*reset) {
      auto pw = read_secret(in, err, a_password);
      app.reset_password(kActor, a_user, pw);
      out << "updated " << a_user << "\n";
    } else if (*set_model) {
      app.set_model(kActor, a_model);
      out << "model set to " << app.model().get().model_name << "\n";
    } else if (*logs) {
      print_logs(app, out, a_tail);
    } else if (*shell) {
      return run_shell(app, in, out, err);
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << synopsis();
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}

}  // namespace smartcourse::cli
