// Benchmarks dataset plumbing: generation, imputation, normalization, and
// the content hash used for split-fairness audits.
#include <benchmark/benchmark.h>

#include <vector>

#include "promptimpute/data.hpp"
#include "promptimpute/imputation.hpp"

using namespace prompt_impute;

namespace {

GenConfig bench_gen_config(int records) {
  GenConfig cfg;
  cfg.record_count = records;
  cfg.feature_count = 8;
  cfg.length_min = 10;
  cfg.length_max = 30;
  cfg.missing_rate = 0.6;
  cfg.missing_mode = MissingMode::informative;
  cfg.label_noise = 0.2;
  cfg.seed = 11;
  return cfg;
}

void bm_synthesize(benchmark::State& state) {
  const GenConfig cfg = bench_gen_config(static_cast<int>(state.range(0)));
  std::uint64_t seed = 1;
  for (auto _ : state) {
    Dataset ds = synthesize(cfg, seed++);
    benchmark::DoNotOptimize(ds.records.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_impute(benchmark::State& state) {
  const Dataset ds = synthesize(bench_gen_config(200), 3);
  const NormStats stats = compute_norm_stats(ds);
  const Protocol protocol = static_cast<int>(state.range(0)) == 0 ? Protocol::locf
                                                                  : Protocol::mean;
  state.SetLabel(protocol_name(protocol));
  for (auto _ : state) {
    Dataset imputed = impute_dataset(ds, protocol, stats.mean);
    benchmark::DoNotOptimize(imputed.records.data());
  }
  state.SetItemsProcessed(state.iterations() * 200);
}

void bm_normalize(benchmark::State& state) {
  const Dataset ds = synthesize(bench_gen_config(200), 5);
  const NormStats stats = compute_norm_stats(ds);
  for (auto _ : state) {
    Dataset normalized = apply_normalization(ds, stats);
    benchmark::DoNotOptimize(normalized.records.data());
  }
  state.SetItemsProcessed(state.iterations() * 200);
}

void bm_dataset_hash(benchmark::State& state) {
  const Dataset ds = synthesize(bench_gen_config(200), 7);
  for (auto _ : state) benchmark::DoNotOptimize(dataset_hash(ds));
  state.SetItemsProcessed(state.iterations() * 200);
}

void bm_split_stratified(benchmark::State& state) {
  const Dataset ds = synthesize(bench_gen_config(400), 9);
  std::uint64_t seed = 1;
  for (auto _ : state) {
    Splits splits = split_stratified(ds, SplitRatios{}, seed++);
    benchmark::DoNotOptimize(splits.train.records.data());
  }
  state.SetItemsProcessed(state.iterations() * 400);
}

}  // namespace

BENCHMARK(bm_synthesize)->Arg(100)->Arg(800);
BENCHMARK(bm_impute)->Arg(0)->Arg(1);
BENCHMARK(bm_normalize);
BENCHMARK(bm_dataset_hash);
BENCHMARK(bm_split_stratified);
