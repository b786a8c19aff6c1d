// Tests for the evaluation metrics. Every ranking metric is checked against
// an independent brute-force oracle (pair enumeration for auroc, exhaustive
// threshold sweeps for auprc and min_pse) on randomized instances with ties,
// plus hand-derived worked examples asserted exactly.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "promptimpute/errors.hpp"
#include "promptimpute/metrics.hpp"
#include "promptimpute/rng.hpp"

using namespace prompt_impute;

namespace {

// O(P*N) concordance count, written from the Mann-Whitney definition.
double oracle_auroc(const std::vector<double>& labels, const std::vector<double>& scores) {
  double concordant = 0.0, tied = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1.0) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0.0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        concordant += 1.0;
      else if (scores[i] == scores[j])
        tied += 1.0;
    }
  }
  return (concordant + 0.5 * tied) / static_cast<double>(pairs);
}

struct PrCounts {
  long long tp = 0, fp = 0, fn = 0;
};

PrCounts counts_at_threshold(const std::vector<double>& labels, const std::vector<double>& scores,
                             double threshold) {
  PrCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1.0) ++c.tp;
    if (predicted && labels[i] == 0.0) ++c.fp;
    if (!predicted && labels[i] == 1.0) ++c.fn;
  }
  return c;
}

// Average precision via the threshold-group definition: walk distinct scores
// in descending order; each group contributes (recall step) * (precision at
// this threshold).
double oracle_auprc(const std::vector<double>& labels, const std::vector<double>& scores) {
  std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
  long long total_pos = 0;
  for (double l : labels) total_pos += l == 1.0 ? 1 : 0;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    PrCounts c = counts_at_threshold(labels, scores, t);
    const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / static_cast<double>(total_pos);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double oracle_min_pse(const std::vector<double>& labels, const std::vector<double>& scores) {
  std::set<double> thresholds(scores.begin(), scores.end());
  double best = 0.0;
  for (double t : thresholds) {
    PrCounts c = counts_at_threshold(labels, scores, t);
    if (c.tp + c.fp == 0) continue;
    const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    best = std::max(best, std::min(precision, sensitivity));
  }
  return best;
}

}  // namespace

TEST_CASE("auroc worked example: three of four pairs concordant") {
  std::vector<double> labels = {1, 1, 0, 0};
  std::vector<double> scores = {0.8, 0.35, 0.4, 0.1};
  CHECK(auroc(labels, scores) == 0.75);
}

TEST_CASE("auroc trivial cases") {
  CHECK(auroc({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}) == 1.0);
  CHECK(auroc({0, 0, 1, 1}, {0.9, 0.8, 0.2, 0.1}) == 0.0);
  CHECK(auroc({1, 0, 1, 0}, {0.5, 0.5, 0.5, 0.5}) == 0.5);
}

TEST_CASE("auprc worked example: positives at ranks one and three") {
  std::vector<double> labels = {1, 0, 1};
  std::vector<double> scores = {0.9, 0.8, 0.7};
  CHECK(auprc(labels, scores) == 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
}

TEST_CASE("auprc trivial cases") {
  CHECK(auprc({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}) == 1.0);
  // single positive ranked last of n has AP = 1/n
  CHECK(auprc({0, 0, 0, 1}, {0.9, 0.8, 0.7, 0.1}) == 0.25);
  CHECK(auprc({0, 1}, {0.9, 0.1}) == 0.5);
}

TEST_CASE("min_pse worked example attains two thirds at threshold 0.6") {
  std::vector<double> labels = {1, 1, 0, 0};
  std::vector<double> scores = {0.9, 0.6, 0.7, 0.2};
  CHECK(min_pse(labels, scores) == 2.0 / 3.0);
}

TEST_CASE("min_pse trivial cases") {
  CHECK(min_pse({1, 1, 0, 0}, {0.9, 0.8, 0.2, 0.1}) == 1.0);
  // constant scores: single threshold keeps sensitivity 1, precision = prevalence
  CHECK(min_pse({1, 0, 0, 0}, {0.4, 0.4, 0.4, 0.4}) == 0.25);
}

TEST_CASE("degenerate inputs raise the documented errors") {
  CHECK_THROWS_AS(auroc({1, 1}, {0.5, 0.6}), UndefinedMetric);
  CHECK_THROWS_AS(auroc({0, 0}, {0.5, 0.6}), UndefinedMetric);
  CHECK_THROWS_AS(auprc({0, 0}, {0.5, 0.6}), UndefinedMetric);
  CHECK_THROWS_AS(min_pse({0, 0}, {0.5, 0.6}), UndefinedMetric);
  CHECK_THROWS_AS(auroc({1, 0}, {0.5}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({1, 2}, {0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(auroc({1, 0}, {0.5, std::nan("")}), std::invalid_argument);
}

TEST_CASE("classification_metrics bundles the three ranking metrics") {
  std::vector<double> labels = {1, 1, 0, 0};
  std::vector<double> scores = {0.8, 0.35, 0.4, 0.1};
  ClassificationEval e = classification_metrics(labels, scores);
  CHECK(e.auroc == auroc(labels, scores));
  CHECK(e.auprc == auprc(labels, scores));
  CHECK(e.min_pse == min_pse(labels, scores));
}

TEST_CASE("regression worked examples") {
  RegressionEval e = regression_metrics({1, 3}, {2, 5});
  CHECK(e.mse == 2.5);
  CHECK(e.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-15));
  CHECK(e.mae == 1.5);

  RegressionEval zero = regression_metrics({1, 2, 3}, {1, 2, 3});
  CHECK(zero.mse == 0.0);
  CHECK(zero.rmse == 0.0);
  CHECK(zero.mae == 0.0);

  RegressionEval single = regression_metrics({0}, {3});
  CHECK(single.mse == 9.0);
  CHECK(single.rmse == 3.0);
  CHECK(single.mae == 3.0);

  CHECK_THROWS_AS(regression_metrics({1}, {1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(regression_metrics({}, {}), std::invalid_argument);
}

TEST_CASE("regression invariants: rmse is the root of mse, mae never exceeds rmse") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(40));
    std::vector<double> y(n), yh(n);
    for (int i = 0; i < n; ++i) {
      y[i] = rng.normal(0, 3);
      yh[i] = rng.normal(0, 3);
    }
    RegressionEval e = regression_metrics(y, yh);
    CHECK(e.rmse == doctest::Approx(std::sqrt(e.mse)).epsilon(1e-15));
    CHECK(e.mae <= e.rmse + 1e-12);
  }
}

TEST_CASE("oracle equivalence on 1000 random instances with ties") {
  Rng rng(20260816);
  int undefined_skips = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(49));
    std::vector<double> labels(n), scores(n);
    for (int i = 0; i < n; ++i) labels[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    // Draw scores from a small grid so ties are frequent.
    const int grid = 2 + static_cast<int>(rng.uniform_int(12));
    for (int i = 0; i < n; ++i)
      scores[i] = static_cast<double>(rng.uniform_int(static_cast<std::uint64_t>(grid))) /
                  static_cast<double>(grid);
    long long pos = 0;
    for (double l : labels) pos += l == 1.0 ? 1 : 0;
    if (pos == 0 || pos == n) {
      ++undefined_skips;
      CHECK_THROWS_AS(auroc(labels, scores), UndefinedMetric);
      continue;
    }
    CHECK(std::abs(auroc(labels, scores) - oracle_auroc(labels, scores)) <= 1e-12);
    CHECK(std::abs(auprc(labels, scores) - oracle_auprc(labels, scores)) <= 1e-12);
    CHECK(std::abs(min_pse(labels, scores) - oracle_min_pse(labels, scores)) <= 1e-12);
  }
  // The skip path must stay rare enough that the oracle comparison dominates.
  CHECK(undefined_skips < 200);
}

TEST_CASE("ranking metrics are invariant under strictly increasing transforms") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(30));
    std::vector<double> labels(n), scores(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
      (labels[i] == 1.0 ? has_pos : has_neg) = true;
      scores[i] = static_cast<double>(rng.uniform_int(8)) / 8.0;
    }
    if (!has_pos || !has_neg) continue;
    std::vector<double> affine(n), curved(n);
    for (int i = 0; i < n; ++i) {
      affine[i] = 2.0 * scores[i] + 3.0;
      curved[i] = std::tanh(scores[i]);
    }
    CHECK(auroc(labels, affine) == auroc(labels, scores));
    CHECK(auroc(labels, curved) == auroc(labels, scores));
    CHECK(auprc(labels, affine) == auprc(labels, scores));
    CHECK(auprc(labels, curved) == auprc(labels, scores));
    CHECK(min_pse(labels, affine) == min_pse(labels, scores));
    CHECK(min_pse(labels, curved) == min_pse(labels, scores));
  }
}

TEST_CASE("label-flip duality for auroc") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng.uniform_int(20));
    std::vector<double> labels(n), scores(n), flipped(n), negated(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      (labels[i] == 1.0 ? has_pos : has_neg) = true;
      scores[i] = static_cast<double>(rng.uniform_int(10)) / 10.0;
      flipped[i] = 1.0 - labels[i];
      negated[i] = -scores[i];
    }
    if (!has_pos || !has_neg) continue;
    CHECK(auroc(flipped, negated) == auroc(labels, scores));
  }
}

TEST_CASE("metrics stay within the unit interval on random inputs") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(20));
    std::vector<double> labels(n), scores(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
      (labels[i] == 1.0 ? has_pos : has_neg) = true;
      scores[i] = rng.uniform();
    }
    if (!has_pos || !has_neg) continue;
    for (double v : {auroc(labels, scores), auprc(labels, scores), min_pse(labels, scores)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
