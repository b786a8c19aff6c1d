#pragma once

#include <vector>

namespace prompt_impute {

struct ClassificationEval {
  double auroc;
  double auprc;
  double min_pse;
};

struct RegressionEval {
  double mse;
  double rmse;
  double mae;
};

// Mann–Whitney concordance: (concordant pairs + 0.5 * tied pairs) / (P * N).
// Throws UndefinedMetric unless both classes are present.
double auroc(const std::vector<double>& labels, const std::vector<double>& scores);

// Average precision with step interpolation; equal scores form one threshold
// group. Throws UndefinedMetric when there is no positive.
double auprc(const std::vector<double>& labels, const std::vector<double>& scores);

// max over decision thresholds (predict positive when score >= threshold) of
// min(precision, sensitivity). Throws UndefinedMetric when there is no
// positive.
double min_pse(const std::vector<double>& labels, const std::vector<double>& scores);

ClassificationEval classification_metrics(const std::vector<double>& labels,
                                          const std::vector<double>& scores);

RegressionEval regression_metrics(const std::vector<double>& y,
                                  const std::vector<double>& y_hat);

}  // namespace prompt_impute
