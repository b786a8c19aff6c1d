#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptimpute/data.hpp"
#include "promptimpute/imputation.hpp"
#include "promptimpute/models.hpp"
#include "promptimpute/prompt.hpp"
#include "promptimpute/tensor.hpp"

namespace prompt_impute {

enum class SelectionMetric { auprc, mse };

const char* selection_metric_name(SelectionMetric m);
SelectionMetric parse_selection_metric(const std::string& name);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr_model = 1e-2;
  double lr_prompt = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Plain gradient steps instead of Adam; the form unit tests pin down.
  bool sgd = false;
  Protocol protocol = Protocol::pai;
  PromptInit prompt_init = PromptInit::zeros;
  // Defaults to AUPRC (classification) / MSE (regression) when unset.
  std::optional<SelectionMetric> selection_metric;
  std::uint64_t seed = 0;
};

// Steps the model group and the prompt group together, each with its own
// learning rate. A frozen prompt (requires_grad=false) is skipped; an
// unfrozen tensor without a gradient is an error. Gradients are cleared
// after every step.
class AsyncOptimizer {
 public:
  AsyncOptimizer(std::vector<Tensor> model_group, Tensor prompt, const TrainConfig& cfg);
  void step();
  long long step_count() const { return t_; }

 private:
  struct Slot {
    Tensor tensor;
    double lr;
    std::vector<double> m, v;
  };
  void apply(Slot& slot);

  std::vector<Slot> slots_;
  double beta1_, beta2_, eps_;
  bool sgd_;
  long long t_ = 0;
};

// Mean binary cross-entropy over per-record [1,1] logits, computed on the
// tape in the logit-stable form (equal to -mean[y log p + (1-y) log(1-p)]).
Tensor loss_classification(Tape& tape, const std::vector<Tensor>& logits,
                           const std::vector<double>& labels);
// Mean squared error over per-record [1,1] predictions.
Tensor loss_regression(Tape& tape, const std::vector<Tensor>& predictions,
                       const std::vector<double>& labels);

// Plain-value forms over probabilities/predictions, for reporting and tests.
double loss_classification_value(const std::vector<double>& labels,
                                 const std::vector<double>& probabilities);
double loss_regression_value(const std::vector<double>& labels,
                             const std::vector<double>& predictions);

struct EpochStats {
  int epoch;  // 1-based
  double train_loss;
  double val_metric;
};

struct TrainedRun {
  ArchConfig arch;
  TrainConfig config;
  ModelParams params;                  // best-validation checkpoint
  std::optional<FeaturePrompt> prompt; // pai only; frozen
  std::vector<EpochStats> history;
  int selection_epoch = 0;  // 1-based epoch of the retained checkpoint
  std::string train_hash;
  std::string val_hash;
};

// Full loop: seeded shuffling, mini-batches, forward with prompt fill (pai)
// or pass-through (pre-imputed baselines), backward, two-rate update; keeps
// the checkpoint with the best validation metric. Splits must already be
// normalized and, for baseline protocols, imputed.
TrainedRun train(const Dataset& train_ds, const Dataset& val_ds, const ArchConfig& arch,
                 const TrainConfig& cfg);

// Frozen-prompt, read-only scoring. For classification the scores are
// probabilities strictly inside (0,1).
std::vector<double> predict(const TrainedRun& run, const Dataset& ds);

// Run directory: manifest.json (arch, config, stats, hashes), history.csv
// (epoch,train_loss,val_metric), checkpoint/ (model blobs + prompt JSON).
void save_run(const TrainedRun& run, const NormStats& stats, const std::string& dir,
              const std::vector<double>& mean_fill = {});

struct LoadedRun {
  TrainedRun run;
  NormStats stats;
  std::vector<double> mean_fill;  // persisted for mean-imputation runs
};

LoadedRun load_run(const std::string& dir);

}  // namespace prompt_impute
