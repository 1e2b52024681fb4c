#include <cmath>

#include "doctest.h"
#include "avpfusion/errors.hpp"
#include "avpfusion/metrics.hpp"
#include "avpfusion/rng.hpp"
#include "support/metric_oracles.hpp"

using namespace avp;
using namespace avp::metrics;

TEST_CASE("perfect classifier") {
  auto m = classification_metrics({50, 50, 0, 0});
  for (double v : {m.accuracy, m.sensitivity, m.specificity, m.mcc, m.f1, m.gmean}) CHECK(v == 1.0);
}

TEST_CASE("hand-derived confusion example") {
  ConfusionCounts c;
  c.tp = 90;
  c.fn = 10;
  c.tn = 80;
  c.fp = 20;
  auto m = classification_metrics(c);
  CHECK(m.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(m.sensitivity == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(m.specificity == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(std::fabs(m.mcc - 0.70353) < 1e-5);
  CHECK(m.mcc == doctest::Approx(7000.0 / std::sqrt(110.0 * 100 * 100 * 90)).epsilon(1e-15));
  CHECK(m.gmean == doctest::Approx(std::sqrt(0.72)).epsilon(1e-15));
  CHECK(std::fabs(m.gmean - 0.84853) < 1e-5);
  CHECK(m.f1 == doctest::Approx(180.0 / 210.0).epsilon(1e-15));
}

TEST_CASE("zero denominators give zero") {
  ConfusionCounts c;
  c.fn = 10;
  auto m = classification_metrics(c);
  CHECK(m.mcc == 0.0);
  CHECK(m.specificity == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK_THROWS_AS(classification_metrics({}), ValidationError);
}

TEST_CASE("confusion uses an inclusive threshold") {
  std::vector<double> s{0.5, 0.49, 0.9, 0.1};
  std::vector<int> y{1, 1, 0, 0};
  auto c = confusion(s, y);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);
  CHECK(confusion(s, y, 0.05).tp == 2);
}

TEST_CASE("metrics match a per-sample recount") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = uniform01(rng);
      y[i] = static_cast<int>(uniform_index(rng, 2));
    }
    const double thr = uniform01(rng);
    auto got = classification_metrics(confusion(s, y, thr));
    auto want = testing::recount_metrics(s, y, thr);
    CHECK(got.accuracy == doctest::Approx(want[0]).epsilon(1e-14));
    CHECK(got.sensitivity == doctest::Approx(want[1]).epsilon(1e-14));
    CHECK(got.specificity == doctest::Approx(want[2]).epsilon(1e-14));
    CHECK(got.mcc == doctest::Approx(want[3]).epsilon(1e-12));
    CHECK(got.f1 == doctest::Approx(want[4]).epsilon(1e-14));
    CHECK(got.mcc >= -1.0);
    CHECK(got.mcc <= 1.0);
  }
}

TEST_CASE("auroc examples") {
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auroc(std::vector<double>{0.8, 0.2, 0.6, 0.4}, std::vector<int>{1, 1, 0, 0}) == 0.5);
  CHECK(auroc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.3, 0.4}, std::vector<int>{1, 1}), ValidationError);
}

TEST_CASE("auroc equals pair counting exactly") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores so ties occur.
      s[i] = std::floor(uniform01(rng) * 12) / 12;
      y[i] = i < 2 ? static_cast<int>(i) : static_cast<int>(uniform_index(rng, 2));
    }
    CHECK(auroc(s, y) == testing::pair_count_auroc(s, y));
  }
}

TEST_CASE("auroc invariances") {
  Rng rng(33);
  std::vector<double> s(40);
  std::vector<int> y(40), flipped(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = uniform01(rng);
    y[i] = static_cast<int>(i % 2);
    flipped[i] = 1 - y[i];
  }
  std::vector<double> t(s);
  for (auto& v : t) v = std::exp(3 * v) - 7;
  CHECK(auroc(t, y) == auroc(s, y));
  CHECK(auroc(s, flipped) == doctest::Approx(1.0 - auroc(s, y)).epsilon(1e-15));
}

TEST_CASE("auprc examples") {
  CHECK(auprc(std::vector<double>{0.9, 0.8, 0.2}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(auprc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0, 0}) == 0.25);
  CHECK(auprc(std::vector<double>{0.9, 0.3, 0.7}, std::vector<int>{1, 1, 0}) ==
        doctest::Approx(5.0 / 6).epsilon(1e-15));
  CHECK_THROWS_AS(auprc(std::vector<double>{0.5}, std::vector<int>{0}), ValidationError);
}

TEST_CASE("auprc matches the sweep oracle") {
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 50);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(uniform01(rng) * 8) / 8;
      y[i] = i == 0 ? 1 : static_cast<int>(uniform_index(rng, 2));
    }
    const double a = auprc(s, y);
    CHECK(a == doctest::Approx(testing::sweep_auprc(s, y)).epsilon(1e-13));
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
}

TEST_CASE("report row order") {
  std::vector<double> s{0.9, 0.3, 0.7, 0.2};
  std::vector<int> y{1, 1, 0, 0};
  auto r = evaluate(s, y);
  auto row = report_row(r);
  REQUIRE(row.size() == 7);
  CHECK(std::string(kReportColumns[0]) == "Accuracy");
  CHECK(std::string(kReportColumns[4]) == "G-mean");
  CHECK(row[0] == r.cls.accuracy);
  CHECK(row[3] == r.cls.mcc);
  CHECK(row[4] == r.cls.gmean);
  CHECK(row[5] == r.auroc);
  CHECK(row[6] == r.auprc);
}
