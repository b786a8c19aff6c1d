#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace prompt_impute {

enum class Task { classification, regression };
enum class MissingMode { random, informative };

const char* task_name(Task t);
Task parse_task(const std::string& name);
const char* missing_mode_name(MissingMode m);
MissingMode parse_missing_mode(const std::string& name);

// One variable-length multivariate series. `values` is length*feature_count
// row-major; entries where mask=0 are placeholders (canonically 0) that no
// consumer may read except through an imputation or fill operation. With
// PROMPT_IMPUTE_DEBUG=1 the placeholders are NaN so that reads through the
// mask blow up loudly.
struct TimeSeriesRecord {
  std::string id;
  int length = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;  // 1 = observed
  double label = 0.0;
};

struct Dataset {
  std::vector<TimeSeriesRecord> records;
  int feature_count = 0;
  Task task = Task::classification;
  std::string provenance;
};

// Per-feature mean/stddev over observed training entries only. Features never
// observed (or constant) fall back to mean 0 / std 1 and leave a note in
// `warnings`.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<std::string> warnings;
};

struct GenConfig {
  int record_count = 100;
  int feature_count = 8;
  int length_min = 10;
  int length_max = 30;
  double missing_rate = 0.0;  // base rate p in [0,1)
  MissingMode missing_mode = MissingMode::random;
  Task task = Task::classification;
  double label_noise = 0.25;
  std::uint64_t seed = 0;
};

// True when PROMPT_IMPUTE_DEBUG=1: masked placeholders are poisoned with NaN
// in memory (files always carry the canonical 0).
bool debug_poison_enabled();

// Latent AR(1) trajectories through a fixed random loading matrix. Labels are
// computed from the fully observed values before the mask is drawn, and the
// label signal includes per-feature mean magnitudes, so informative
// missingness (drop probability grows with |value|) correlates with the
// label. Classification labels are calibrated to roughly 20% positives.
Dataset synthesize(const GenConfig& config, std::uint64_t seed);
Dataset synthesize(const GenConfig& config);  // uses config.seed

// CSV pair: data file `record_id,time_index,f1..fN` (empty cell = missing,
// time_index 0-based contiguous per record) and labels file `record_id,label`.
Dataset load_dataset(const std::string& data_path, const std::string& labels_path);
void save_dataset_csv(const Dataset& ds, const std::string& data_path,
                      const std::string& labels_path);

// Single JSON document with explicit mask arrays; round-trips bit-exactly.
void save_dataset_json(const Dataset& ds, const std::string& path);
Dataset load_dataset_json(const std::string& path);

NormStats compute_norm_stats(const Dataset& train);
Dataset apply_normalization(const Dataset& ds, const NormStats& stats);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified by class (classification) or label quartile (regression);
// largest-remainder allocation per stratum, deterministic per seed.
Splits split_stratified(const Dataset& ds, const SplitRatios& ratios, std::uint64_t seed);

// Flips observed entries to missing, chosen uniformly over the whole dataset,
// until the global missing rate reaches target_rate (within one entry). The
// flipped set is a pure function of (ds, target_rate, seed).
Dataset inject_missing(const Dataset& ds, double target_rate, std::uint64_t seed);

// Stratified record subset of a training split; selection is deterministic
// per seed and fraction 1.0 returns the dataset unchanged.
Dataset subsample(const Dataset& train, double fraction, std::uint64_t seed);

double observed_missing_rate(const Dataset& ds);

// FNV-1a fingerprint of shapes, masks, labels, and observed values (masked
// placeholders hash as 0 regardless of debug poisoning). Used to prove that
// protocols saw identical preprocessing.
std::string dataset_hash(const Dataset& ds);

}  // namespace prompt_impute
