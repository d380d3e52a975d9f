#include <doctest.h>

#include <chrono>
#include <cmath>

#include "smartcourse/error.hpp"
#include "smartcourse/metrics.hpp"
#include "support.hpp"

using namespace smartcourse;
using namespace smartcourse::metrics;
using testsupport::uniform;

namespace {

struct Triple {
  CodeSet r, p, l;
  unsigned rm, pm, lm;  // same sets as bitmasks
};

Triple random_triple(int universe) {
  Triple t{};
  auto code = [](int i) { return "CPS " + std::to_string(1000 + i); };
  unsigned full = (1u << universe) - 1;
  t.rm = static_cast<unsigned>(uniform(0, static_cast<int>(full)));
  t.pm = static_cast<unsigned>(uniform(0, static_cast<int>(full)));
  t.lm = static_cast<unsigned>(uniform(0, static_cast<int>(full))) & ~t.pm;
  for (int i = 0; i < universe; ++i) {
    if (t.rm >> i & 1u) t.r.insert(code(i));
    if (t.pm >> i & 1u) t.p.insert(code(i));
    if (t.lm >> i & 1u) t.l.insert(code(i));
  }
  return t;
}

int bits(unsigned x) {
  int n = 0;
  for (; x; x >>= 1) n += static_cast<int>(x & 1u);
  return n;
}

}  // namespace

TEST_CASE("hand-enumerated examples") {
  CHECK(plan_score({"a", "b", "c", "d"}, {"a", "b", "x"}).value == 0.5);
  CHECK(plan_score({"a", "b"}, {"a", "b"}).value == 1.0);
  auto empty = plan_score({}, {"a"});
  CHECK(empty.value == 0.0);
  CHECK(empty.empty_r);
  CHECK(personal_score({}, {"a"}, {"l"}).empty_r);

  auto ps = plan_score({"a", "l"}, {"a"}).value;
  auto pe = personal_score({"a", "l"}, {"a"}, {"l"}).value;
  CHECK(ps == 0.5);
  CHECK(pe == 1.0);
  CHECK(lift(ps, pe) == 0.5);

  CHECK(recall({"a", "b", "c"}, {"a", "b"}) == 1.0);
  CHECK_FALSE(recall({"a"}, {}).has_value());

  CodeSet p;
  for (int i = 0; i < 18; ++i) p.insert("P" + std::to_string(i));
  CHECK(std::fabs(*recall({"P0", "P1", "P2", "Z"}, p) - 3.0 / 18.0) < 1e-12);
  CHECK(std::fabs(*recall({"P0", "P1", "P2", "Z"}, p) - 0.1667) < 1e-4);
}

TEST_CASE("lift reproduces every row of the published results table") {
  // (PlanScore, PersonalScore, Lift) per mode, two decimals as printed.
  const double rows[][3] = {{0.53, 0.78, 0.25}, {0.03, 0.19, 0.16}, {0.60, 0.69, 0.09}, {0.04, 0.04, 0.00}};
  for (const auto& r : rows) CHECK(std::fabs(lift(r[0], r[1]) - r[2]) < 1e-9);
  CHECK(lift(0.0, 1.0) == 1.0);
  CHECK(lift(0.4, 0.4) == 0.0);
}

TEST_CASE("overlapping P and L is rejected") {
  try {
    personal_score({"a"}, {"a"}, {"a"});
    FAIL("expected InvalidSets");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidSets);
  }
}

TEST_CASE("metrics equal a brute-force counter on random triples") {
  for (int trial = 0; trial < 2000; ++trial) {
    int universe = uniform(1, 12);
    auto t = random_triple(universe);
    double r_size = bits(t.rm);
    double expect_plan = r_size == 0 ? 0.0 : bits(t.rm & t.pm) / r_size;
    double expect_personal = r_size == 0 ? 0.0 : bits(t.rm & (t.pm | t.lm)) / r_size;
    auto rec = score_record(trial, ContextMode::Full, t.r, t.p, t.l, 0.0);
    CHECK(std::fabs(rec.plan_score - expect_plan) <= 1e-12);
    CHECK(std::fabs(rec.personal_score - expect_personal) <= 1e-12);
    CHECK(std::fabs(rec.lift - (expect_personal - expect_plan)) <= 1e-12);
    CHECK(rec.empty_r == (r_size == 0));
    CHECK(rec.num_rec == t.r.size());
    if (t.pm == 0) {
      CHECK_FALSE(rec.recall_defined);
    } else {
      CHECK(rec.recall_defined);
      CHECK(std::fabs(rec.recall - static_cast<double>(bits(t.rm & t.pm)) / bits(t.pm)) <= 1e-12);
    }
  }
}

TEST_CASE("metric identities hold on every generated record") {
  for (int trial = 0; trial < 2000; ++trial) {
    auto t = random_triple(uniform(1, 12));
    auto rec = score_record(0, ContextMode::Full, t.r, t.p, t.l, 0.0);
    CHECK(rec.lift == rec.personal_score - rec.plan_score);
    CHECK(rec.personal_score >= rec.plan_score);
    CHECK(rec.plan_score >= 0.0);
    CHECK(rec.personal_score <= 1.0);
    if (t.l.empty()) CHECK(rec.personal_score == rec.plan_score);
    CHECK(rec.recall >= 0.0);
    CHECK(rec.recall <= 1.0);

    // Adding an outstanding course never lowers recall or the plan numerator.
    if (!t.p.empty()) {
      auto grown = t.r;
      grown.insert(*t.p.begin());
      auto after = score_record(0, ContextMode::Full, grown, t.p, t.l, 0.0);
      CHECK(after.recall >= rec.recall);
      CHECK(after.plan_score * static_cast<double>(grown.size()) >=
            rec.plan_score * static_cast<double>(t.r.size()) - 1e-9);
    }
  }
}

TEST_CASE("bootstrap of constant samples has zero width") {
  for (double v : {0.0, 0.5, 0.1, 1.0 / 3.0}) {
    std::vector<double> xs(25, v);
    auto ci = bootstrap_ci(xs, kBootstrapIterations, 42);
    CHECK(ci.mean == ci.lo);
    CHECK(ci.mean == ci.hi);
  }
  std::vector<double> three = {0.5, 0.5, 0.5};
  auto ci = bootstrap_ci(three, 1000, 1);
  CHECK(ci.mean == 0.5);
  CHECK(ci.lo == 0.5);
  CHECK(ci.hi == 0.5);
}

TEST_CASE("bootstrap is reproducible for a fixed seed") {
  std::vector<double> xs;
  for (int i = 0; i < 25; ++i) xs.push_back(uniform(0, 100) / 100.0);
  auto a = bootstrap_ci(xs, kBootstrapIterations, 7);
  auto b = bootstrap_ci(xs, kBootstrapIterations, 7);
  CHECK(a.mean == b.mean);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  auto c = bootstrap_ci(xs, kBootstrapIterations, 8);
  CHECK(c.mean == a.mean);
  CHECK(a.lo <= a.mean);
  CHECK(a.mean <= a.hi);
}

TEST_CASE("bootstrap of two points matches the analytic resampling distribution") {
  // Resampled means of {0,1} are 0, 0.5, 1 with probability 1/4, 1/2, 1/4,
  // so both 2.5% tails sit on the extremes.
  std::vector<double> xs = {0.0, 1.0};
  auto ci = bootstrap_ci(xs, kBootstrapIterations, 99);
  CHECK(std::fabs(ci.mean - 0.5) <= 0.02);
  CHECK(ci.lo == doctest::Approx(0.0));
  CHECK(ci.hi == doctest::Approx(1.0));
}

TEST_CASE("bootstrap interval tightens around the mean for larger samples") {
  std::vector<double> xs;
  for (int i = 0; i < 400; ++i) xs.push_back(i % 2);
  auto ci = bootstrap_ci(xs, 2000, 3);
  // Standard error of the mean is 0.025; a 95% interval is about +-0.049.
  CHECK(ci.lo == doctest::Approx(0.451).epsilon(0.03));
  CHECK(ci.hi == doctest::Approx(0.549).epsilon(0.03));
}

TEST_CASE("bootstrap argument checks") {
  std::vector<double> none;
  try {
    bootstrap_ci(none, 10, 1);
    FAIL("expected EmptySamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptySamples);
  }
  std::vector<double> one = {0.3};
  CHECK_THROWS_AS(bootstrap_ci(one, 0, 1), Error);
  auto ci = bootstrap_ci(one, 1, 1);
  CHECK(ci.lo == 0.3);
  CHECK(ci.hi == 0.3);
}

TEST_CASE("10,000 resamples over 25 samples is fast") {
  std::vector<double> xs;
  for (int i = 0; i < 25; ++i) xs.push_back(i / 25.0);
  auto start = std::chrono::steady_clock::now();
  bootstrap_ci(xs, kBootstrapIterations, 5);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 1.0);
}

TEST_CASE("aggregate filters by mode and excludes undefined recall") {
  std::vector<MetricRecord> records;
  records.push_back(score_record(1, ContextMode::Full, {"a", "b"}, {"a"}, {}, 1.0));
  records.push_back(score_record(2, ContextMode::Full, {"a"}, {}, {}, 3.0));
  records.push_back(score_record(1, ContextMode::NoPlan, {}, {"a"}, {}, 2.0));
  auto row = aggregate(ContextMode::Full, records, 500, 11);
  CHECK(row.n_queries == 2);
  CHECK(row.num_rec == 1.5);
  CHECK(row.plan_score.mean == doctest::Approx(0.25));
  CHECK(row.recall_n == 1);
  CHECK(row.recall.mean == 1.0);
  CHECK(row.latency_seconds == 2.0);
  auto np = aggregate(ContextMode::NoPlan, records, 500, 11);
  CHECK(np.n_queries == 1);
  CHECK(np.plan_score.mean == 0.0);
  auto none = aggregate(ContextMode::QuestionOnly, records, 500, 11);
  CHECK(none.n_queries == 0);
}
