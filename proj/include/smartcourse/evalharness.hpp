#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smartcourse/advisor.hpp"
#include "smartcourse/metrics.hpp"

namespace smartcourse::eval {

namespace fs = std::filesystem;

struct Query {
  int id = 0;
  std::string text;
};

struct QuerySet {
  std::vector<Query> queries;
  fs::path source_path;
};

/// One "id|question" per non-comment line; ids must run 1..n in any order.
QuerySet load_queries(const fs::path& path);
QuerySet parse_queries(std::string_view text, const fs::path& source = {});

struct CellTrace {
  int query_id = 0;
  ContextMode mode = ContextMode::Full;
  std::string prompt;
  std::string reply;
  std::string failure;  // non-empty when the cell degraded to empty R
};

struct RunMetadata {
  std::string model;
  std::string runtime;
  std::string student;
  std::uint64_t seed = 0;
  int iterations = metrics::kBootstrapIterations;
  std::string timestamp;
};

struct AblationReport {
  std::vector<metrics::AggregateRow> rows;  // report order
  std::vector<metrics::MetricRecord> records;
  std::vector<CellTrace> trace;
  RunMetadata meta;
};

struct AblationOptions {
  std::uint64_t seed = 0;
  int iterations = metrics::kBootstrapIterations;
};

/// Runs every query under every requested mode, sequentially, and scores
/// each reply against the student's outstanding and low-grade sets.
/// Runtime failures degrade the cell to an empty recommendation set; store
/// errors abort.
AblationReport run_ablation(const QuerySet& queries, std::string_view student, std::span<const ContextMode> modes,
                            advisor::Advisor& advisor, const advisor::AdvisorConfig& cfg,
                            const AblationOptions& options);

enum class ReportFormat { Csv, Markdown };

inline constexpr std::string_view kCsvHeader =
    "mode,num_rec,plan_score,plan_lo,plan_hi,personal_score,personal_lo,personal_hi,lift,lift_lo,lift_hi,"
    "recall,recall_lo,recall_hi,latency_s";

/// Scores use shortest round-trip formatting; latency is rounded to
/// milliseconds. Undefined recall renders as "NA".
std::string render_csv(std::span<const metrics::AggregateRow> rows);
std::vector<metrics::AggregateRow> parse_csv(std::string_view text);

/// Means only, two decimals.
std::string render_markdown(std::span<const metrics::AggregateRow> rows);

void emit_report(const AblationReport& report, ReportFormat format, const fs::path& out);

/// Run metadata and per-cell traces as JSON, written next to the report.
std::string render_metadata_json(const AblationReport& report);

}  // namespace smartcourse::eval
