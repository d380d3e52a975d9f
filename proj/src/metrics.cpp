#include "smartcourse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "smartcourse/error.hpp"

namespace smartcourse::metrics {

namespace {

std::size_t intersection_size(const CodeSet& a, const CodeSet& b) {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

std::uint64_t draw_index(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection sampling keeps indices uniform without relying on the
  // implementation-defined std::uniform_int_distribution.
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return x % n;
}

double percentile(const std::vector<double>& sorted, double q) {
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean_of(std::span<const double> xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

}  // namespace

Score plan_score(const CodeSet& recommended, const CodeSet& outstanding) {
  if (recommended.empty()) return {0.0, true};
  return {static_cast<double>(intersection_size(recommended, outstanding)) / static_cast<double>(recommended.size()),
          false};
}

Score personal_score(const CodeSet& recommended, const CodeSet& outstanding, const CodeSet& low_grade) {
  if (intersection_size(outstanding, low_grade) != 0)
    throw Error(Errc::InvalidSets, "outstanding and low-grade sets must be disjoint");
  if (recommended.empty()) return {0.0, true};
  // P and L are disjoint, so |R ∩ (P ∪ L)| = |R ∩ P| + |R ∩ L|.
  auto hits = intersection_size(recommended, outstanding) + intersection_size(recommended, low_grade);
  return {static_cast<double>(hits) / static_cast<double>(recommended.size()), false};
}

std::optional<double> recall(const CodeSet& recommended, const CodeSet& outstanding) {
  if (outstanding.empty()) return std::nullopt;
  return static_cast<double>(intersection_size(recommended, outstanding)) / static_cast<double>(outstanding.size());
}

MetricRecord score_record(int query_id, ContextMode mode, const CodeSet& recommended, const CodeSet& outstanding,
                          const CodeSet& low_grade, double latency_seconds) {
  MetricRecord r;
  r.query_id = query_id;
  r.mode = mode;
  r.num_rec = recommended.size();
  auto plan = plan_score(recommended, outstanding);
  auto personal = personal_score(recommended, outstanding, low_grade);
  r.plan_score = plan.value;
  r.personal_score = personal.value;
  r.lift = lift(r.plan_score, r.personal_score);
  r.empty_r = plan.empty_r;
  auto rc = recall(recommended, outstanding);
  r.recall_defined = rc.has_value();
  r.recall = rc.value_or(0.0);
  r.latency_seconds = latency_seconds;
  return r;
}

Interval bootstrap_ci(std::span<const double> samples, int iterations, std::uint64_t seed) {
  if (samples.empty()) throw Error(Errc::EmptySamples, "bootstrap needs at least one sample");
  if (iterations < 1) throw Error(Errc::InvalidValue, "bootstrap iterations must be >= 1");

  Interval out;
  out.mean = mean_of(samples);

  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::uint64_t>(samples.size());
  std::vector<double> means(static_cast<std::size_t>(iterations));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) sum += samples[draw_index(rng, n)];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  out.lo = percentile(means, 0.025);
  out.hi = percentile(means, 0.975);
  // Percentile intervals of heavily skewed samples can exclude the point
  // estimate by rounding; widen so lo <= mean <= hi always holds.
  out.lo = std::min(out.lo, out.mean);
  out.hi = std::max(out.hi, out.mean);
  return out;
}

AggregateRow aggregate(ContextMode mode, std::span<const MetricRecord> records, int iterations, std::uint64_t seed) {
  AggregateRow row;
  row.mode = mode;
  std::vector<double> plan, personal, lifts, recalls, num_rec, latency;
  for (const auto& r : records) {
    if (r.mode != mode) continue;
    plan.push_back(r.plan_score);
    personal.push_back(r.personal_score);
    lifts.push_back(r.lift);
    num_rec.push_back(static_cast<double>(r.num_rec));
    latency.push_back(r.latency_seconds);
    if (r.recall_defined) recalls.push_back(r.recall);
  }
  row.n_queries = plan.size();
  if (plan.empty()) return row;
  row.num_rec = mean_of(num_rec);
  row.latency_seconds = mean_of(latency);
  row.plan_score = bootstrap_ci(plan, iterations, seed);
  row.personal_score = bootstrap_ci(personal, iterations, seed);
  row.lift = bootstrap_ci(lifts, iterations, seed);
  row.recall_n = recalls.size();
  if (!recalls.empty()) row.recall = bootstrap_ci(recalls, iterations, seed);
  return row;
}

}  // namespace smartcourse::metrics
