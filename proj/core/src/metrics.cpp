#include "promptimpute/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "promptimpute/errors.hpp"

namespace prompt_impute {

namespace {

void check_binary_inputs(const std::vector<double>& labels, const std::vector<double>& scores,
                         const char* name) {
  if (labels.size() != scores.size())
    throw std::invalid_argument(std::string(name) + ": labels and scores differ in length");
  if (labels.empty()) throw std::invalid_argument(std::string(name) + ": empty input");
  for (double y : labels)
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument(std::string(name) + ": labels must be 0 or 1");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument(std::string(name) + ": non-finite score");
}

// Indices sorted by descending score; within a tie group the order is
// irrelevant to every metric below because groups are processed whole.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double auroc(const std::vector<double>& labels, const std::vector<double>& scores) {
  check_binary_inputs(labels, scores, "auroc");
  std::size_t pos = 0;
  for (double y : labels) pos += (y == 1.0);
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("auroc: needs both classes present");

  // Average-rank formulation: AUROC = (sum of positive ranks - P(P+1)/2) / (P*N),
  // with tied scores receiving their mean rank. Equivalent to counting
  // concordant pairs plus half the ties.
  const auto order = descending_order(scores);
  double rank_sum_pos = 0.0;  // ranks assigned in ascending-score order
  const std::size_t n = labels.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // order is descending, so positions [i, j) hold ascending ranks n-j+1 .. n-i.
    const double mean_rank = (static_cast<double>(n - j + 1) + static_cast<double>(n - i)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1.0) rank_sum_pos += mean_rank;
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auprc(const std::vector<double>& labels, const std::vector<double>& scores) {
  check_binary_inputs(labels, scores, "auprc");
  std::size_t pos = 0;
  for (double y : labels) pos += (y == 1.0);
  if (pos == 0) throw UndefinedMetric("auprc: needs at least one positive");

  const auto order = descending_order(scores);
  const std::size_t n = labels.size();
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t group_tp = 0, group_fp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1.0)
        ++group_tp;
      else
        ++group_fp;
      ++j;
    }
    const double recall_prev = static_cast<double>(tp) / static_cast<double>(pos);
    tp += group_tp;
    fp += group_fp;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - recall_prev) * precision;
    i = j;
  }
  return ap;
}

double min_pse(const std::vector<double>& labels, const std::vector<double>& scores) {
  check_binary_inputs(labels, scores, "min_pse");
  std::size_t pos = 0;
  for (double y : labels) pos += (y == 1.0);
  if (pos == 0) throw UndefinedMetric("min_pse: needs at least one positive");

  const auto order = descending_order(scores);
  const std::size_t n = labels.size();
  double best = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1.0)
        ++tp;
      else
        ++fp;
      ++j;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double sensitivity = static_cast<double>(tp) / static_cast<double>(pos);
    best = std::max(best, std::min(precision, sensitivity));
    i = j;
  }
  return best;
}

ClassificationEval classification_metrics(const std::vector<double>& labels,
                                          const std::vector<double>& scores) {
  return ClassificationEval{auroc(labels, scores), auprc(labels, scores),
                            min_pse(labels, scores)};
}

RegressionEval regression_metrics(const std::vector<double>& y,
                                  const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size())
    throw std::invalid_argument("regression_metrics: length mismatch");
  if (y.empty()) throw std::invalid_argument("regression_metrics: empty input");
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - y_hat[i];
    se += d * d;
    ae += std::abs(d);
  }
  const double n = static_cast<double>(y.size());
  RegressionEval out{se / n, 0.0, ae / n};
  out.rmse = std::sqrt(out.mse);
  return out;
}

}  // namespace prompt_impute
