#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "promptimpute/data.hpp"
#include "promptimpute/imputation.hpp"
#include "promptimpute/models.hpp"
#include "promptimpute/training.hpp"

namespace prompt_impute {

enum class SweepKind { none, missing, samples, lr, layers };

const char* sweep_kind_name(SweepKind k);
SweepKind parse_sweep_kind(const std::string& name);

struct SweepSpec {
  SweepKind kind = SweepKind::none;
  std::vector<double> values;  // grid; empty iff kind == none
};

// One experiment = a grid of independent training runs: (sweep value x
// backbone x protocol x seed). Within a (seed, sweep value) cell every
// protocol sees byte-identical splits, injected masks, and subsamples; only
// the fill strategy differs.
struct ExperimentConfig {
  GenConfig gen;            // synthetic source unless file paths are set
  std::string data_path;    // optional CSV input (with labels_path)
  std::string labels_path;
  SplitRatios split;
  std::vector<BackboneKind> backbones{BackboneKind::gru};
  std::vector<Protocol> protocols{Protocol::pai, Protocol::zero};
  int layers = 1;
  int hidden_dim = 32;
  TrainConfig train;  // protocol/seed fields are assigned per run
  SweepSpec sweep;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "experiment-out";
  int workers = 1;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Structural checks (nonempty lists, grid values legal for the sweep kind).
// Throws InvalidInput. Grid-vs-base-rate checks that need the dataset happen
// inside the run.
void validate_experiment_config(const ExperimentConfig& cfg);

struct ReportRow {
  double sweep_value = 0.0;
  BackboneKind backbone = BackboneKind::gru;
  Protocol protocol = Protocol::pai;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;                      // diagnosis when failed
  std::map<std::string, double> metrics;  // auroc/auprc/min_pse or mse/rmse/mae
  long long model_param_count = 0;
  long long prompt_param_count = 0;  // 0 whenever no prompt was instantiated
  int selection_epoch = 0;
};

struct AggregateRow {
  double sweep_value = 0.0;
  BackboneKind backbone = BackboneKind::gru;
  Protocol protocol = Protocol::pai;
  std::string metric;
  double median = 0.0, min = 0.0, max = 0.0;
  int count = 0;  // non-failed rows aggregated
};

// Aggregate collapsed over backbones: the plotting table.
struct FigureRow {
  double sweep_value = 0.0;
  Protocol protocol = Protocol::pai;
  std::string metric;
  double median = 0.0, min = 0.0, max = 0.0;
};

// Learning-rate sweeps additionally aggregate by which side of the model
// rate the prompt rate falls on.
struct LrPartitionRow {
  std::string partition;  // "prompt-lr-below-model" | "prompt-lr-at-or-above-model"
  Protocol protocol = Protocol::pai;
  std::string metric;
  double median = 0.0, min = 0.0, max = 0.0;
  int count = 0;
};

// Per (seed, sweep value): the shared split fingerprints plus what each
// protocol's job independently recomputed from the data it trained on
// (pre-imputation). Equality proves the comparison was fair.
struct FairnessEntry {
  std::uint64_t seed = 0;
  double sweep_value = 0.0;
  std::string train_hash, val_hash, test_hash;
  std::map<std::string, std::vector<std::string>> per_protocol;  // name -> {train,val,test}
  bool protocols_match = true;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::string config_hash;
  std::string version;
  double wall_time_seconds = 0.0;  // informational; excluded from comparisons
  std::vector<ReportRow> rows;    // sorted by (sweep value, backbone, protocol, seed)
  std::vector<AggregateRow> aggregates;
  std::vector<FigureRow> figure_rows;
  std::vector<LrPartitionRow> lr_partitions;  // lr sweeps only
  std::vector<FairnessEntry> fairness;
  bool fairness_ok = true;
  int failed_rows = 0;
};

// Trains every (backbone x protocol x seed) cell on identically prepared
// data and scores the test split. Failures are recorded per row, never
// thrown past the engine.
ExperimentReport run_compare_protocols(const ExperimentConfig& cfg);

// The compare design repeated per grid value with the perturbation (injected
// missingness / training subsample / prompt learning rate / baseline depth)
// applied identically across protocols.
ExperimentReport run_sweep(const ExperimentConfig& cfg);

// Accepts either a bare generator-config object or one nested under "gen".
GenConfig parse_gen_config(const std::string& json_text);

// One training run end to end, as the train command executes it.
struct SingleRunConfig {
  GenConfig gen;
  std::string data_path, labels_path;  // set both to train on files
  SplitRatios split;
  BackboneKind backbone = BackboneKind::gru;
  int layers = 1;
  int hidden_dim = 32;
  TrainConfig train;
};

SingleRunConfig parse_single_run_config(const std::string& json_text);

struct SingleRunArtifacts {
  TrainedRun run;
  NormStats stats;
  std::vector<double> mean_fill;
  std::vector<std::string> test_ids;
  std::vector<double> test_labels;
  std::vector<double> test_scores;
  std::map<std::string, double> test_metrics;
  std::string train_hash, val_hash, test_hash;  // pre-imputation splits
};

// split -> normalize -> (impute | pass through) -> train -> score test.
SingleRunArtifacts run_single(const SingleRunConfig& cfg);

enum class ReportFormat { json, csv, figure_data };

const char* report_format_name(ReportFormat f);
ReportFormat parse_report_format(const std::string& name);

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& json_text);

// Writes report.json / report.csv / figure_data.csv into dir (temp file +
// rename, so partial writes never clobber a good artifact). Returns the
// paths written. Serialization is key-sorted and deterministic: emitting the
// same report twice produces identical bytes.
std::vector<std::string> emit_report(const ExperimentReport& report,
                                     const std::vector<ReportFormat>& formats,
                                     const std::string& dir);

// Full-model gradient verification: analytic backward vs central differences
// over every parameter (prompt included) on random small instances.
struct GradientCheckCase {
  BackboneKind backbone = BackboneKind::rnn;
  HeadKind head = HeadKind::linear_classifier;
  Protocol protocol = Protocol::pai;
  int instance = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradientAudit {
  std::vector<GradientCheckCase> cases;
  double worst = 0.0;
  bool all_pass = true;
};

GradientAudit run_gradient_audit(int instances_per_combo, double eps, double tolerance,
                                 std::uint64_t seed);

}  // namespace prompt_impute
