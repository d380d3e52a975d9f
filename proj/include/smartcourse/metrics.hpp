#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>

#include "smartcourse/context_mode.hpp"

namespace smartcourse::metrics {

using CodeSet = std::set<std::string>;

/// A ratio whose denominator may be empty; value is 0 when it is.
struct Score {
  double value = 0.0;
  bool empty_r = false;
};

/// |R ∩ P| / |R|
Score plan_score(const CodeSet& recommended, const CodeSet& outstanding);

/// |R ∩ (P ∪ L)| / |R|. Throws InvalidSets when P and L intersect.
Score personal_score(const CodeSet& recommended, const CodeSet& outstanding, const CodeSet& low_grade);

inline double lift(double plan, double personal) noexcept { return personal - plan; }

/// |R ∩ P| / |P|, or nullopt when P is empty.
std::optional<double> recall(const CodeSet& recommended, const CodeSet& outstanding);

struct MetricRecord {
  int query_id = 0;
  ContextMode mode = ContextMode::Full;
  std::size_t num_rec = 0;
  double plan_score = 0.0;
  double personal_score = 0.0;
  double lift = 0.0;
  double recall = 0.0;
  bool recall_defined = true;
  bool empty_r = false;
  double latency_seconds = 0.0;
};

MetricRecord score_record(int query_id, ContextMode mode, const CodeSet& recommended, const CodeSet& outstanding,
                          const CodeSet& low_grade, double latency_seconds);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr int kBootstrapIterations = 10000;

/// Percentile bootstrap: `iterations` resamples with replacement, each
/// index drawn from a std::mt19937_64 seeded with `seed` by unbiased
/// rejection; (lo, hi) are the 2.5th and 97.5th percentiles of the resampled
/// means with linear interpolation between order statistics.
Interval bootstrap_ci(std::span<const double> samples, int iterations, std::uint64_t seed);

struct AggregateRow {
  ContextMode mode = ContextMode::Full;
  std::size_t n_queries = 0;
  double num_rec = 0.0;
  Interval plan_score;
  Interval personal_score;
  Interval lift;
  Interval recall;
  std::size_t recall_n = 0;  // records with a defined recall
  double latency_seconds = 0.0;
};

/// Aggregates the records of one mode; records with undefined recall are
/// excluded from the recall interval only.
AggregateRow aggregate(ContextMode mode, std::span<const MetricRecord> records, int iterations, std::uint64_t seed);

}  // namespace smartcourse::metrics
