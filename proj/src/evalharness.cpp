#include "smartcourse/evalharness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "smartcourse/academics.hpp"
#include "smartcourse/error.hpp"
#include "smartcourse/io.hpp"

namespace smartcourse::eval {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.00" reads as a sign error in a table of non-negative means.
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

double parse_number(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw Error(Errc::MalformedFile, "CSV line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

}  // namespace

QuerySet parse_queries(std::string_view text, const fs::path& source) {
  QuerySet set;
  set.source_path = source;
  std::set<int> ids;
  for (const auto& [number, line] : io::record_lines(text)) {
    auto bar = line.find('|');
    if (bar == std::string::npos)
      throw Error(Errc::MalformedFile, "queries line " + std::to_string(number) + ": expected 'id|question'");
    auto id_text = io::trim(std::string_view(line).substr(0, bar));
    int id = 0;
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc{} || ptr != id_text.data() + id_text.size() || id < 1)
      throw Error(Errc::MalformedFile, "queries line " + std::to_string(number) + ": bad id");
    auto question = io::trim(std::string_view(line).substr(bar + 1));
    if (question.empty())
      throw Error(Errc::MalformedFile, "queries line " + std::to_string(number) + ": empty question");
    if (!io::is_valid_utf8(question))
      throw Error(Errc::MalformedFile, "queries line " + std::to_string(number) + ": not UTF-8");
    if (!ids.insert(id).second)
      throw Error(Errc::MalformedFile, "queries line " + std::to_string(number) + ": duplicate id " + std::to_string(id));
    set.queries.push_back({id, std::string(question)});
  }
  if (set.queries.empty()) throw Error(Errc::EmptyQuerySet, "query file has no queries");
  if (*ids.rbegin() != static_cast<int>(ids.size()))
    throw Error(Errc::MalformedFile, "query ids must be dense from 1");
  return set;
}

QuerySet load_queries(const fs::path& path) { return parse_queries(io::read_file(path), path); }

AblationReport run_ablation(const QuerySet& queries, std::string_view student, std::span<const ContextMode> modes,
                            advisor::Advisor& advisor, const advisor::AdvisorConfig& cfg,
                            const AblationOptions& options) {
  std::set<ContextMode> distinct(modes.begin(), modes.end());
  if (distinct.size() != modes.size() || modes.empty())
    throw Error(Errc::InvalidValue, "modes must be a non-empty list without repeats");

  auto& store = advisor.store();
  auto account = store.find_account(student);
  if (!account || account->role != store::Role::Student)
    throw Error(Errc::UnknownStudent, "no student '" + std::string(student) + "'");
  auto plan = store.load_plan(account->major);
  auto snapshot = academics::compute_progress(account->username, store.ledger_for(account->username), plan);

  AblationReport report;
  report.meta = {cfg.model_name, advisor.runtime().describe(), account->username, options.seed, options.iterations,
                 io::utc_timestamp()};

  advisor::AdviseOptions advise_opts;
  advise_opts.record_history = false;
  advise_opts.notify = false;
  advise_opts.config = &cfg;

  for (const auto& q : queries.queries) {
    for (ContextMode mode : modes) {
      CellTrace trace{q.id, mode, {}, {}, {}};
      metrics::CodeSet recommended;
      double latency = 0.0;
      try {
        auto rec = advisor.advise(account->username, q.text, mode, advise_opts);
        recommended.insert(rec.codes.begin(), rec.codes.end());
        latency = rec.source_reply.latency_seconds;
        trace.prompt = std::move(rec.prompt_text);
        trace.reply = std::move(rec.source_reply.text);
      } catch (const Error& e) {
        if (e.code() == Errc::Timeout) {
          latency = cfg.timeout_seconds;
        } else if (e.code() != Errc::RuntimeUnavailable) {
          throw;
        }
        trace.failure = std::string(errc_name(e.code())) + ": " + e.what();
        spdlog::warn("query {} mode {} degraded to empty recommendations: {}", q.id, mode_name(mode), e.what());
      }
      report.records.push_back(
          metrics::score_record(q.id, mode, recommended, snapshot.outstanding, snapshot.low_grade, latency));
      report.trace.push_back(std::move(trace));
    }
  }

  for (ContextMode mode : kReportModeOrder)
    if (distinct.contains(mode))
      report.rows.push_back(metrics::aggregate(mode, report.records, options.iterations, options.seed));
  return report;
}

std::string render_csv(std::span<const metrics::AggregateRow> rows) {
  std::string out(kCsvHeader);
  out += "\n";
  for (const auto& r : rows) {
    out += std::string(mode_name(r.mode)) + "," + shortest(r.num_rec);
    for (const auto* iv : {&r.plan_score, &r.personal_score, &r.lift})
      out += "," + shortest(iv->mean) + "," + shortest(iv->lo) + "," + shortest(iv->hi);
    if (r.recall_n > 0)
      out += "," + shortest(r.recall.mean) + "," + shortest(r.recall.lo) + "," + shortest(r.recall.hi);
    else
      out += ",NA,NA,NA";
    out += "," + fixed(r.latency_seconds, 3) + "\n";
  }
  return out;
}

std::vector<metrics::AggregateRow> parse_csv(std::string_view text) {
  auto lines = io::record_lines(text);
  if (lines.empty() || lines.front().text != kCsvHeader) throw Error(Errc::MalformedFile, "CSV header mismatch");
  std::vector<metrics::AggregateRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = io::split(lines[i].text, ',');
    if (f.size() != 15) throw Error(Errc::MalformedFile, "CSV line " + std::to_string(lines[i].number) + ": expected 15 fields");
    auto mode = parse_mode(f[0]);
    if (!mode) throw Error(Errc::MalformedFile, "CSV line " + std::to_string(lines[i].number) + ": unknown mode");
    metrics::AggregateRow r;
    r.mode = *mode;
    auto num = [&](std::size_t k) { return parse_number(f[k], lines[i].number); };
    r.num_rec = num(1);
    r.plan_score = {num(2), num(3), num(4)};
    r.personal_score = {num(5), num(6), num(7)};
    r.lift = {num(8), num(9), num(10)};
    if (f[11] != "NA") {
      r.recall = {num(11), num(12), num(13)};
      r.recall_n = 1;
    }
    r.latency_seconds = num(14);
    rows.push_back(r);
  }
  return rows;
}

std::string render_markdown(std::span<const metrics::AggregateRow> rows) {
  std::string out = "| Mode | #Rec | PlanScore | PersonalScore | Lift | Recall | Latency (s) |\n";
  out += "|------|------|-----------|---------------|------|--------|-------------|\n";
  for (const auto& r : rows) {
    out += "| " + std::string(mode_name(r.mode)) + " | " + fixed(r.num_rec, 2) + " | " + fixed(r.plan_score.mean, 2) +
           " | " + fixed(r.personal_score.mean, 2) + " | " + fixed(r.lift.mean, 2) + " | " +
           (r.recall_n > 0 ? fixed(r.recall.mean, 2) : std::string("NA")) + " | " + fixed(r.latency_seconds, 2) +
           " |\n";
  }
  return out;
}

std::string render_metadata_json(const AblationReport& report) {
  nlohmann::json j;
  j["model"] = report.meta.model;
  j["runtime"] = report.meta.runtime;
  j["student"] = report.meta.student;
  j["seed"] = report.meta.seed;
  j["bootstrap_iterations"] = report.meta.iterations;
  j["timestamp"] = report.meta.timestamp;
  j["samples_per_cell"] = 1;
  auto cells = nlohmann::json::array();
  for (std::size_t i = 0; i < report.trace.size(); ++i) {
    const auto& t = report.trace[i];
    const auto& r = report.records[i];
    nlohmann::json c = {{"query_id", t.query_id},
                        {"mode", mode_name(t.mode)},
                        {"num_rec", r.num_rec},
                        {"plan_score", r.plan_score},
                        {"personal_score", r.personal_score},
                        {"lift", r.lift},
                        {"latency_s", r.latency_seconds},
                        {"reply", t.reply}};
    if (r.recall_defined)
      c["recall"] = r.recall;
    else
      c["recall"] = nullptr;
    if (!t.failure.empty()) c["failure"] = t.failure;
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j.dump(2) + "\n";
}

void emit_report(const AblationReport& report, ReportFormat format, const fs::path& out) {
  std::string body = format == ReportFormat::Csv ? render_csv(report.rows) : render_markdown(report.rows);
  io::atomic_write(out, body);
  fs::path meta = out;
  meta += ".meta.json";
  io::atomic_write(meta, render_metadata_json(report));
}

}  // namespace smartcourse::eval
