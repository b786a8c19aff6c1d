#include "promptimpute/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json_detail.hpp"
#include "promptimpute/errors.hpp"
#include "promptimpute/metrics.hpp"
#include "promptimpute/rng.hpp"
#include "promptimpute/version.hpp"

namespace prompt_impute {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct PreparedRecord {
  Tensor x;     // constant [L,N]; masked entries written as 0, never read
  Tensor mask;  // constant [L,N] of 0/1
  int length;
  double label;
};

std::vector<PreparedRecord> prepare_records(const Dataset& ds) {
  std::vector<PreparedRecord> out;
  out.reserve(ds.records.size());
  const int n = ds.feature_count;
  for (const auto& rec : ds.records) {
    PreparedRecord p;
    p.length = rec.length;
    p.label = rec.label;
    std::vector<double> values(rec.values.size());
    std::vector<double> mask(rec.mask.size());
    for (std::size_t i = 0; i < rec.values.size(); ++i) {
      // Build the tensor without reading masked placeholders (which are NaN
      // in debug mode); the fill/imputation path provides those entries.
      values[i] = rec.mask[i] == 1 ? rec.values[i] : 0.0;
      mask[i] = static_cast<double>(rec.mask[i]);
    }
    p.x = tensor_create({rec.length, n}, std::move(values));
    p.mask = tensor_create({rec.length, n}, std::move(mask));
    out.push_back(std::move(p));
  }
  return out;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(cfg.lr_model > 0.0) || !(cfg.lr_prompt > 0.0))
    throw std::invalid_argument("train: learning rates must be positive");
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0))
    throw std::invalid_argument("train: Adam betas must lie in [0,1)");
  if (!(cfg.adam_eps > 0.0)) throw std::invalid_argument("train: Adam epsilon must be positive");
}

void require_dense(const Dataset& ds, Protocol protocol, const char* which) {
  for (const auto& rec : ds.records)
    for (auto m : rec.mask)
      if (m == 0)
        throw InvalidInput(std::string("train: the ") + protocol_name(protocol) +
                           " protocol expects pre-imputed (dense) " + which + " records");
}

std::vector<double> forward_scores(const ArchConfig& arch, const ModelParams& params,
                                   const FeaturePrompt* prompt,
                                   const std::vector<PreparedRecord>& records) {
  Tape tape(/*recording=*/false);
  std::vector<double> scores;
  scores.reserve(records.size());
  for (const auto& rec : records) {
    Tensor x = prompt != nullptr ? fill_prompt(tape, rec.x, rec.mask, *prompt) : rec.x;
    Tensor e = backbone_forward(tape, arch, params, x, rec.length);
    Tensor out = head_forward(tape, arch, params, e);
    scores.push_back(prediction_score(arch, out->data[0]));
  }
  return scores;
}

double validation_metric(SelectionMetric sel, const std::vector<double>& labels,
                         const std::vector<double>& scores) {
  if (sel == SelectionMetric::auprc) return auprc(labels, scores);
  return regression_metrics(labels, scores).mse;
}

}  // namespace

const char* selection_metric_name(SelectionMetric m) {
  return m == SelectionMetric::auprc ? "auprc" : "mse";
}

SelectionMetric parse_selection_metric(const std::string& name) {
  if (name == "auprc") return SelectionMetric::auprc;
  if (name == "mse") return SelectionMetric::mse;
  throw InvalidInput("unknown selection metric '" + name + "'");
}

AsyncOptimizer::AsyncOptimizer(std::vector<Tensor> model_group, Tensor prompt,
                               const TrainConfig& cfg)
    : beta1_(cfg.adam_beta1), beta2_(cfg.adam_beta2), eps_(cfg.adam_eps), sgd_(cfg.sgd) {
  for (auto& t : model_group) slots_.push_back(Slot{std::move(t), cfg.lr_model, {}, {}});
  if (prompt != nullptr) slots_.push_back(Slot{std::move(prompt), cfg.lr_prompt, {}, {}});
}

void AsyncOptimizer::step() {
  ++t_;
  for (auto& slot : slots_) {
    if (!slot.tensor->requires_grad) continue;  // frozen group
    if (slot.tensor->grad.empty())
      throw StateError("async update: an unfrozen tensor has no gradient; run backward first");
    apply(slot);
    slot.tensor->grad.clear();
  }
}

void AsyncOptimizer::apply(Slot& slot) {
  auto& theta = slot.tensor->data;
  const auto& g = slot.tensor->grad;
  if (sgd_) {
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= slot.lr * g[i];
    return;
  }
  if (slot.m.empty()) {
    slot.m.assign(theta.size(), 0.0);
    slot.v.assign(theta.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
    slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
    theta[i] -= slot.lr * (slot.m[i] / bc1) / (std::sqrt(slot.v[i] / bc2) + eps_);
  }
}

Tensor loss_classification(Tape& tape, const std::vector<Tensor>& logits,
                           const std::vector<double>& labels) {
  if (logits.empty()) throw std::invalid_argument("loss_classification: empty batch");
  if (labels.size() != logits.size())
    throw std::invalid_argument("loss_classification: label/logit count mismatch");
  Tensor acc;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor term = tape.bce_with_logits_mean(logits[i], {labels[i]});
    acc = i == 0 ? term : tape.add(acc, term);
  }
  return tape.mul(acc, tensor_full({1}, 1.0 / static_cast<double>(logits.size())));
}

Tensor loss_regression(Tape& tape, const std::vector<Tensor>& predictions,
                       const std::vector<double>& labels) {
  if (predictions.empty()) throw std::invalid_argument("loss_regression: empty batch");
  if (labels.size() != predictions.size())
    throw std::invalid_argument("loss_regression: label/prediction count mismatch");
  Tensor acc;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    Tensor diff = predictions[i];
    Tensor target = tensor_create(diff->shape, std::vector<double>(diff->size(), labels[i]));
    Tensor err = tape.sub(diff, target);
    Tensor sq = tape.mul(err, err);
    acc = i == 0 ? sq : tape.add(acc, sq);
  }
  return tape.mul(tape.sum(acc), tensor_full({1}, 1.0 / static_cast<double>(predictions.size())));
}

double loss_classification_value(const std::vector<double>& labels,
                                 const std::vector<double>& probabilities) {
  if (labels.empty()) throw std::invalid_argument("loss_classification: empty batch");
  if (labels.size() != probabilities.size())
    throw std::invalid_argument("loss_classification: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = labels[i], p = probabilities[i];
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("loss_classification: labels must be 0 or 1");
    if (!(p > 0.0 && p < 1.0))
      throw std::invalid_argument("loss_classification: probabilities must lie in (0,1)");
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(labels.size());
}

double loss_regression_value(const std::vector<double>& labels,
                             const std::vector<double>& predictions) {
  if (labels.empty()) throw std::invalid_argument("loss_regression: empty batch");
  if (labels.size() != predictions.size())
    throw std::invalid_argument("loss_regression: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    acc += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
  return acc / static_cast<double>(labels.size());
}

TrainedRun train(const Dataset& train_ds, const Dataset& val_ds, const ArchConfig& arch,
                 const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_arch(arch);
  if (train_ds.records.empty()) throw std::invalid_argument("train: empty training split");
  if (train_ds.feature_count != arch.input_dim || val_ds.feature_count != arch.input_dim)
    throw InvalidInput("train: dataset feature count does not match the architecture");
  const bool classify = train_ds.task == Task::classification;
  if (classify && arch.head != HeadKind::linear_classifier)
    throw std::invalid_argument("train: classification task needs the linear-classifier head");
  if (!classify && arch.head != HeadKind::mlp_regressor)
    throw std::invalid_argument("train: regression task needs the mlp-regressor head");
  const SelectionMetric sel = cfg.selection_metric.value_or(
      classify ? SelectionMetric::auprc : SelectionMetric::mse);
  if (sel == SelectionMetric::auprc && !classify)
    throw std::invalid_argument("train: AUPRC selection needs a classification task");
  if (cfg.protocol != Protocol::pai) {
    require_dense(train_ds, cfg.protocol, "training");
    require_dense(val_ds, cfg.protocol, "validation");
  }

  ModelParams params = init_model(arch, derive_seed(cfg.seed, 0));
  std::optional<FeaturePrompt> prompt;
  if (cfg.protocol == Protocol::pai) {
    NormStats stats;
    const NormStats* stats_ptr = nullptr;
    if (cfg.prompt_init == PromptInit::feature_means) {
      stats = compute_norm_stats(train_ds);
      stats_ptr = &stats;
    }
    prompt = init_prompt(cfg.prompt_init, train_ds.feature_count, stats_ptr,
                         derive_seed(cfg.seed, 2));
  }

  const auto train_set = prepare_records(train_ds);
  const auto val_set = prepare_records(val_ds);
  std::vector<double> val_labels;
  val_labels.reserve(val_ds.records.size());
  for (const auto& rec : val_ds.records) val_labels.push_back(rec.label);

  std::vector<Tensor> model_group;
  for (const auto& [name, t] : params.named) model_group.push_back(t);
  AsyncOptimizer optimizer(model_group, prompt ? prompt->v : nullptr, cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<std::vector<double>> best_params;
  std::vector<double> best_prompt;
  double best_metric = 0.0;
  int selection_epoch = 0;
  std::vector<EpochStats> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      ++batch_index;
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      std::vector<Tensor> outputs;
      std::vector<double> labels;
      outputs.reserve(end - start);
      labels.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const PreparedRecord& rec = train_set[order[i]];
        Tensor x = prompt ? fill_prompt(tape, rec.x, rec.mask, *prompt) : rec.x;
        Tensor e = backbone_forward(tape, arch, params, x, rec.length);
        outputs.push_back(head_forward(tape, arch, params, e));
        labels.push_back(rec.label);
      }
      Tensor loss = classify ? loss_classification(tape, outputs, labels)
                             : loss_regression(tape, outputs, labels);
      if (!std::isfinite(loss->data[0]))
        throw DivergedRun("training loss became non-finite", epoch, batch_index);
      tape.backward(loss);
      optimizer.step();
      loss_sum += loss->data[0] * static_cast<double>(end - start);
      seen += end - start;
    }
    const double train_loss = loss_sum / static_cast<double>(seen);

    const auto scores = forward_scores(arch, params, prompt ? &*prompt : nullptr, val_set);
    const double metric = validation_metric(sel, val_labels, scores);
    const bool better = history.empty() || (sel == SelectionMetric::auprc ? metric > best_metric
                                                                          : metric < best_metric);
    if (better) {
      best_metric = metric;
      selection_epoch = epoch;
      best_params.clear();
      for (const auto& [name, t] : params.named) best_params.push_back(t->data);
      if (prompt) best_prompt = prompt->v->data;
    }
    history.push_back(EpochStats{epoch, train_loss, metric});
  }

  TrainedRun run;
  run.arch = arch;
  run.config = cfg;
  for (std::size_t i = 0; i < params.named.size(); ++i)
    run.params.named.emplace_back(
        params.named[i].first,
        tensor_create(params.named[i].second->shape, best_params[i], /*requires_grad=*/true));
  if (prompt) {
    FeaturePrompt best;
    best.init_strategy = prompt->init_strategy;
    best.v = tensor_create(prompt->v->shape, best_prompt, /*requires_grad=*/true);
    freeze(best);
    run.prompt = std::move(best);
  }
  run.history = std::move(history);
  run.selection_epoch = selection_epoch;
  run.train_hash = dataset_hash(train_ds);
  run.val_hash = dataset_hash(val_ds);
  return run;
}

std::vector<double> predict(const TrainedRun& run, const Dataset& ds) {
  if (ds.feature_count != run.arch.input_dim)
    throw InvalidInput("predict: dataset feature count does not match the model");
  if (run.config.protocol == Protocol::pai) {
    if (!run.prompt.has_value()) throw StateError("predict: run has no prompt");
  } else {
    for (const auto& rec : ds.records)
      for (auto m : rec.mask)
        if (m == 0)
          throw InvalidInput("predict: this protocol expects pre-imputed (dense) records");
  }
  const auto prepared = prepare_records(ds);
  return forward_scores(run.arch, run.params, run.prompt ? &*run.prompt : nullptr, prepared);
}

void save_run(const TrainedRun& run, const NormStats& stats, const std::string& dir,
              const std::vector<double>& mean_fill) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory '" + dir + "': " + ec.message());

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["arch"] = detail::arch_to_json(run.arch);
  manifest["config"] = detail::train_config_to_json(run.config);
  manifest["selection_epoch"] = run.selection_epoch;
  manifest["train_hash"] = run.train_hash;
  manifest["val_hash"] = run.val_hash;
  manifest["norm_stats"] = detail::norm_stats_to_json(stats);
  if (!mean_fill.empty()) manifest["mean_fill"] = mean_fill;

  std::ofstream mf(std::filesystem::path(dir) / "manifest.json");
  if (!mf) throw IoError("cannot write run manifest in '" + dir + "'");
  mf << manifest.dump(2) << "\n";
  if (!mf.good()) throw IoError("failed while writing run manifest");

  std::ofstream hist(std::filesystem::path(dir) / "history.csv");
  if (!hist) throw IoError("cannot write history.csv in '" + dir + "'");
  hist << "epoch,train_loss,val_metric\n";
  for (const auto& row : run.history)
    hist << row.epoch << "," << format_double(row.train_loss) << ","
         << format_double(row.val_metric) << "\n";
  if (!hist.good()) throw IoError("failed while writing history.csv");

  const std::string ckpt = (std::filesystem::path(dir) / "checkpoint").string();
  save_checkpoint(run.arch, run.params, run.config.seed, ckpt);
  if (run.prompt)
    save_prompt_json(*run.prompt, (std::filesystem::path(ckpt) / "prompt.json").string());
}

LoadedRun load_run(const std::string& dir) {
  std::ifstream mf(std::filesystem::path(dir) / "manifest.json");
  if (!mf) throw IoError("cannot open run manifest in '" + dir + "'");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid run manifest: ") + e.what());
  }
  LoadedRun loaded;
  try {
    loaded.run.arch = detail::arch_from_json(manifest.at("arch"));
    loaded.run.config = detail::train_config_from_json(manifest.at("config"));
    loaded.run.selection_epoch = manifest.at("selection_epoch").get<int>();
    loaded.run.train_hash = manifest.at("train_hash").get<std::string>();
    loaded.run.val_hash = manifest.at("val_hash").get<std::string>();
    loaded.stats = detail::norm_stats_from_json(manifest.at("norm_stats"));
    loaded.mean_fill = manifest.value("mean_fill", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("run manifest violates the schema: ") + e.what());
  }

  const std::string ckpt = (std::filesystem::path(dir) / "checkpoint").string();
  Checkpoint checkpoint = load_checkpoint(ckpt);
  loaded.run.params = std::move(checkpoint.params);
  if (loaded.run.config.protocol == Protocol::pai)
    loaded.run.prompt = load_prompt_json((std::filesystem::path(ckpt) / "prompt.json").string());

  std::ifstream hist(std::filesystem::path(dir) / "history.csv");
  if (hist) {
    std::string line;
    std::getline(hist, line);  // header
    while (std::getline(hist, line)) {
      if (line.empty()) continue;
      EpochStats row{};
      if (std::sscanf(line.c_str(), "%d,%lf,%lf", &row.epoch, &row.train_loss,
                      &row.val_metric) == 3)
        loaded.run.history.push_back(row);
    }
  }
  return loaded;
}

}  // namespace prompt_impute
