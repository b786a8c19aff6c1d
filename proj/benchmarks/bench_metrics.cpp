// Benchmarks the ranking metrics, whose sort-based implementations are the
// only O(n log n) piece of an evaluation pass.
#include <benchmark/benchmark.h>

#include <vector>

#include "promptimpute/metrics.hpp"
#include "promptimpute/rng.hpp"

using namespace prompt_impute;

namespace {

struct Scored {
  std::vector<double> labels;
  std::vector<double> scores;
};

Scored make_scored(int n) {
  Rng rng(17);
  Scored s;
  s.labels.reserve(n);
  s.scores.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double label = rng.uniform() < 0.3 ? 1.0 : 0.0;
    s.labels.push_back(label);
    // mildly informative scores with ties sprinkled in
    const double noise = rng.uniform();
    s.scores.push_back(i % 7 == 0 ? 0.5 : 0.4 * label + 0.6 * noise);
  }
  return s;
}

void bm_auroc(benchmark::State& state) {
  const Scored s = make_scored(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(auroc(s.labels, s.scores));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_auprc(benchmark::State& state) {
  const Scored s = make_scored(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(auprc(s.labels, s.scores));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_min_pse(benchmark::State& state) {
  const Scored s = make_scored(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(min_pse(s.labels, s.scores));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_classification_metrics(benchmark::State& state) {
  const Scored s = make_scored(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ClassificationEval ev = classification_metrics(s.labels, s.scores);
    benchmark::DoNotOptimize(ev);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_regression_metrics(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(19);
  std::vector<double> y(n), yhat(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.normal();
    yhat[i] = y[i] + 0.3 * rng.normal();
  }
  for (auto _ : state) {
    RegressionEval ev = regression_metrics(y, yhat);
    benchmark::DoNotOptimize(ev);
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(bm_auroc)->Arg(128)->Arg(1024)->Arg(8192);
BENCHMARK(bm_auprc)->Arg(128)->Arg(1024)->Arg(8192);
BENCHMARK(bm_min_pse)->Arg(128)->Arg(1024)->Arg(8192);
BENCHMARK(bm_classification_metrics)->Arg(1024);
BENCHMARK(bm_regression_metrics)->Arg(1024);
