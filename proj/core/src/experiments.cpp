#include "promptimpute/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "json_detail.hpp"
#include "promptimpute/errors.hpp"
#include "promptimpute/hash.hpp"
#include "promptimpute/metrics.hpp"
#include "promptimpute/prompt.hpp"
#include "promptimpute/rng.hpp"
#include "promptimpute/version.hpp"

namespace prompt_impute {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

nlohmann::json config_to_json_obj(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["gen"] = detail::gen_config_to_json(cfg.gen);
  j["data"] = cfg.data_path;
  j["labels"] = cfg.labels_path;
  j["split"] = {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}};
  nlohmann::json backbones = nlohmann::json::array();
  for (auto b : cfg.backbones) backbones.push_back(backbone_name(b));
  j["backbones"] = std::move(backbones);
  nlohmann::json protocols = nlohmann::json::array();
  for (auto p : cfg.protocols) protocols.push_back(protocol_name(p));
  j["protocols"] = std::move(protocols);
  j["layers"] = cfg.layers;
  j["hidden_dim"] = cfg.hidden_dim;
  j["train"] = detail::train_config_to_json(cfg.train);
  j["sweep"] = {{"kind", sweep_kind_name(cfg.sweep.kind)}, {"values", cfg.sweep.values}};
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["workers"] = cfg.workers;
  return j;
}

ExperimentConfig config_from_json_obj(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("gen")) cfg.gen = detail::gen_config_from_json(j.at("gen"));
    cfg.data_path = j.value("data", cfg.data_path);
    cfg.labels_path = j.value("labels", cfg.labels_path);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      cfg.split.train = s.value("train", cfg.split.train);
      cfg.split.val = s.value("val", cfg.split.val);
      cfg.split.test = s.value("test", cfg.split.test);
    }
    if (j.contains("backbones")) {
      cfg.backbones.clear();
      for (const auto& name : j.at("backbones"))
        cfg.backbones.push_back(parse_backbone(name.get<std::string>()));
    }
    if (j.contains("protocols")) {
      cfg.protocols.clear();
      for (const auto& name : j.at("protocols"))
        cfg.protocols.push_back(parse_protocol(name.get<std::string>()));
    }
    cfg.layers = j.value("layers", cfg.layers);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    if (j.contains("train")) cfg.train = detail::train_config_from_json(j.at("train"));
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      cfg.sweep.kind = parse_sweep_kind(s.value("kind", "none"));
      cfg.sweep.values = s.value("values", std::vector<double>{});
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.workers = j.value("workers", cfg.workers);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("experiment config violates the schema: ") + e.what());
  }
  return cfg;
}

// Data shared by every protocol within one (seed, sweep value) cell:
// normalized splits still carrying their masks, plus the mean-imputation
// fill derived from the training split.
struct PreparedCell {
  std::uint64_t seed = 0;
  double sweep_value = 0.0;
  Dataset train, val, test;
  std::vector<double> mean_fill;
  std::string train_hash, val_hash, test_hash;
};

struct Job {
  std::size_t cell_index;
  BackboneKind backbone;
  int backbone_index;
  Protocol protocol;
  std::uint64_t seed;
  double sweep_value;
};

struct JobResult {
  ReportRow row;
  std::string train_hash, val_hash, test_hash;  // recomputed inside the job
};

PreparedCell prepare_cell(const ExperimentConfig& cfg, const Dataset& base, std::uint64_t seed,
                          double sweep_value) {
  PreparedCell cell;
  cell.seed = seed;
  cell.sweep_value = sweep_value;
  Splits splits = split_stratified(base, cfg.split, derive_seed(seed, 11));
  if (cfg.sweep.kind == SweepKind::missing) {
    // A split whose realized rate already meets the target (possible at the
    // grid's base value: per-record rates vary around the dataset rate) is
    // kept as-is; injection only ever raises a rate.
    auto raise_to = [&](Dataset& part, std::uint64_t stream) {
      if (observed_missing_rate(part) < sweep_value)
        part = inject_missing(part, sweep_value, derive_seed(seed, stream));
    };
    raise_to(splits.train, 13);
    raise_to(splits.val, 14);
    raise_to(splits.test, 15);
  } else if (cfg.sweep.kind == SweepKind::samples) {
    splits.train = subsample(splits.train, sweep_value, derive_seed(seed, 17));
  }
  const NormStats stats = compute_norm_stats(splits.train);
  cell.train = apply_normalization(splits.train, stats);
  cell.val = apply_normalization(splits.val, stats);
  cell.test = apply_normalization(splits.test, stats);
  cell.mean_fill = compute_norm_stats(cell.train).mean;
  cell.train_hash = dataset_hash(cell.train);
  cell.val_hash = dataset_hash(cell.val);
  cell.test_hash = dataset_hash(cell.test);
  return cell;
}

JobResult run_job(const ExperimentConfig& cfg, const PreparedCell& cell, const Job& job) {
  JobResult res;
  res.row.sweep_value = job.sweep_value;
  res.row.backbone = job.backbone;
  res.row.protocol = job.protocol;
  res.row.seed = job.seed;
  try {
    // Fingerprint the pre-imputation data this job actually received; the
    // report compares these across protocols.
    res.train_hash = dataset_hash(cell.train);
    res.val_hash = dataset_hash(cell.val);
    res.test_hash = dataset_hash(cell.test);

    ArchConfig arch;
    arch.backbone = job.backbone;
    arch.hidden_dim = cfg.hidden_dim;
    arch.input_dim = cell.train.feature_count;
    arch.head = cell.train.task == Task::classification ? HeadKind::linear_classifier
                                                        : HeadKind::mlp_regressor;
    if (cfg.sweep.kind == SweepKind::layers)
      arch.layers = job.protocol == Protocol::pai
                        ? 1
                        : static_cast<int>(std::llround(job.sweep_value));
    else
      arch.layers = cfg.layers;

    TrainConfig tc = cfg.train;
    tc.protocol = job.protocol;
    // One draw per (data seed, backbone): every protocol starts from the
    // same weights, so outcome differences come from the protocol alone.
    tc.seed = derive_seed(job.seed, 100 + static_cast<std::uint64_t>(job.backbone_index));
    if (cfg.sweep.kind == SweepKind::lr) tc.lr_prompt = job.sweep_value;

    Dataset train_ds, val_ds, test_ds;
    const bool baseline = job.protocol != Protocol::pai;
    if (baseline) {
      train_ds = impute_dataset(cell.train, job.protocol, cell.mean_fill);
      val_ds = impute_dataset(cell.val, job.protocol, cell.mean_fill);
      test_ds = impute_dataset(cell.test, job.protocol, cell.mean_fill);
    }
    const Dataset& tr = baseline ? train_ds : cell.train;
    const Dataset& va = baseline ? val_ds : cell.val;
    const Dataset& te = baseline ? test_ds : cell.test;

    TrainedRun run = train(tr, va, arch, tc);
    const std::vector<double> scores = predict(run, te);
    std::vector<double> labels;
    labels.reserve(te.records.size());
    for (const auto& rec : te.records) labels.push_back(rec.label);

    if (te.task == Task::classification) {
      const ClassificationEval ev = classification_metrics(labels, scores);
      res.row.metrics = {{"auroc", ev.auroc}, {"auprc", ev.auprc}, {"min_pse", ev.min_pse}};
    } else {
      const RegressionEval ev = regression_metrics(labels, scores);
      res.row.metrics = {{"mse", ev.mse}, {"rmse", ev.rmse}, {"mae", ev.mae}};
    }
    const ParamCount pc = count_parameters(run.params, run.prompt ? &*run.prompt : nullptr);
    res.row.model_param_count = pc.model_count;
    res.row.prompt_param_count = pc.prompt_count;
    res.row.selection_epoch = run.selection_epoch;
  } catch (const std::exception& e) {
    res.row.failed = true;
    res.row.error = e.what();
    res.row.metrics.clear();
  }
  return res;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ExperimentReport run_engine(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  ExperimentReport report;
  report.config = cfg;
  report.version = kVersion;
  {
    const std::string dump = experiment_config_to_json(cfg);
    Fnv1a h;
    h.update(dump.data(), dump.size());
    report.config_hash = h.hex();
  }

  const bool from_files = !cfg.data_path.empty();
  Dataset file_base;
  if (from_files) file_base = load_dataset(cfg.data_path, cfg.labels_path);

  std::vector<double> values =
      cfg.sweep.kind == SweepKind::none ? std::vector<double>{0.0} : cfg.sweep.values;

  // Perturbation grids are validated against the realized data here, where
  // the base rate is known.
  if (cfg.sweep.kind == SweepKind::missing) {
    const double base_rate = from_files ? observed_missing_rate(file_base)
                                        : cfg.gen.missing_rate;
    for (double v : values)
      if (v + 1e-12 < base_rate)
        throw InvalidInput("missing sweep value " + fmt(v) +
                           " is below the dataset's base missing rate " + fmt(base_rate));
  }

  // Prepare the shared data serially: one cell per (seed, sweep value).
  std::vector<PreparedCell> cells;
  cells.reserve(values.size() * cfg.seeds.size());
  std::vector<std::vector<std::size_t>> cell_index(values.size(),
                                                   std::vector<std::size_t>(cfg.seeds.size()));
  for (std::size_t vi = 0; vi < values.size(); ++vi)
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const Dataset base =
          from_files ? file_base : synthesize(cfg.gen, cfg.seeds[si]);
      cell_index[vi][si] = cells.size();
      cells.push_back(prepare_cell(cfg, base, cfg.seeds[si], values[vi]));
    }

  if (cfg.train.selection_metric == SelectionMetric::auprc &&
      cells.front().train.task != Task::classification)
    throw InvalidInput("AUPRC run selection needs a classification task");

  // One job per report row, in the row order of the final report.
  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < values.size(); ++vi)
    for (std::size_t bi = 0; bi < cfg.backbones.size(); ++bi)
      for (std::size_t pi = 0; pi < cfg.protocols.size(); ++pi)
        for (std::size_t si = 0; si < cfg.seeds.size(); ++si)
          jobs.push_back(Job{cell_index[vi][si], cfg.backbones[bi], static_cast<int>(bi),
                             cfg.protocols[pi], cfg.seeds[si], values[vi]});

  std::vector<JobResult> results(jobs.size());
  const int worker_count =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(jobs.size())));
  if (worker_count == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      results[i] = run_job(cfg, cells[jobs[i].cell_index], jobs[i]);
  } else {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
        results[i] = run_job(cfg, cells[jobs[i].cell_index], jobs[i]);
    };
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (int w = 0; w < worker_count; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  report.rows.reserve(results.size());
  for (auto& r : results) report.rows.push_back(std::move(r.row));
  for (const auto& row : report.rows)
    if (row.failed) ++report.failed_rows;

  // Fairness audit: per cell, every protocol's recomputed hashes must match
  // the cell's canonical ones.
  for (std::size_t vi = 0; vi < values.size(); ++vi)
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
      const PreparedCell& cell = cells[cell_index[vi][si]];
      FairnessEntry entry;
      entry.seed = cell.seed;
      entry.sweep_value = cell.sweep_value;
      entry.train_hash = cell.train_hash;
      entry.val_hash = cell.val_hash;
      entry.test_hash = cell.test_hash;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].cell_index != cell_index[vi][si]) continue;
        const JobResult& r = results[i];
        if (r.train_hash.empty()) continue;  // job failed before fingerprinting
        const std::vector<std::string> h{r.train_hash, r.val_hash, r.test_hash};
        auto [it, inserted] = entry.per_protocol.emplace(protocol_name(jobs[i].protocol), h);
        if (!inserted && it->second != h) entry.protocols_match = false;
        if (h[0] != cell.train_hash || h[1] != cell.val_hash || h[2] != cell.test_hash)
          entry.protocols_match = false;
      }
      if (!entry.protocols_match) report.fairness_ok = false;
      report.fairness.push_back(std::move(entry));
    }

  // Aggregates over non-failed rows, keyed by (sweep value, backbone,
  // protocol, metric); figure rows additionally collapse backbones.
  struct Key {
    double value;
    int backbone;
    int protocol;
    std::string metric;
    bool operator<(const Key& o) const {
      return std::tie(value, backbone, protocol, metric) <
             std::tie(o.value, o.backbone, o.protocol, o.metric);
    }
  };
  std::map<Key, std::vector<double>> groups;
  for (const auto& row : report.rows) {
    if (row.failed) continue;
    for (const auto& [metric, value] : row.metrics)
      groups[Key{row.sweep_value, static_cast<int>(row.backbone),
                 static_cast<int>(row.protocol), metric}]
          .push_back(value);
  }
  for (const auto& [key, vals] : groups) {
    AggregateRow agg;
    agg.sweep_value = key.value;
    agg.backbone = static_cast<BackboneKind>(key.backbone);
    agg.protocol = static_cast<Protocol>(key.protocol);
    agg.metric = key.metric;
    agg.median = median_of(vals);
    agg.min = *std::min_element(vals.begin(), vals.end());
    agg.max = *std::max_element(vals.begin(), vals.end());
    agg.count = static_cast<int>(vals.size());
    report.aggregates.push_back(std::move(agg));
  }

  struct FigKey {
    double value;
    int protocol;
    std::string metric;
    bool operator<(const FigKey& o) const {
      return std::tie(value, protocol, metric) < std::tie(o.value, o.protocol, o.metric);
    }
  };
  std::map<FigKey, std::vector<double>> fig_groups;
  for (const auto& row : report.rows) {
    if (row.failed) continue;
    for (const auto& [metric, value] : row.metrics)
      fig_groups[FigKey{row.sweep_value, static_cast<int>(row.protocol), metric}].push_back(
          value);
  }
  for (const auto& [key, vals] : fig_groups) {
    FigureRow fig;
    fig.sweep_value = key.value;
    fig.protocol = static_cast<Protocol>(key.protocol);
    fig.metric = key.metric;
    fig.median = median_of(vals);
    fig.min = *std::min_element(vals.begin(), vals.end());
    fig.max = *std::max_element(vals.begin(), vals.end());
    report.figure_rows.push_back(std::move(fig));
  }

  if (cfg.sweep.kind == SweepKind::lr) {
    struct PartKey {
      int side;  // 0: prompt lr below model lr, 1: at or above
      int protocol;
      std::string metric;
      bool operator<(const PartKey& o) const {
        return std::tie(side, protocol, metric) < std::tie(o.side, o.protocol, o.metric);
      }
    };
    std::map<PartKey, std::vector<double>> parts;
    for (const auto& row : report.rows) {
      if (row.failed) continue;
      const int side = row.sweep_value < cfg.train.lr_model ? 0 : 1;
      for (const auto& [metric, value] : row.metrics)
        parts[PartKey{side, static_cast<int>(row.protocol), metric}].push_back(value);
    }
    for (const auto& [key, vals] : parts) {
      LrPartitionRow part;
      part.partition = key.side == 0 ? "prompt-lr-below-model" : "prompt-lr-at-or-above-model";
      part.protocol = static_cast<Protocol>(key.protocol);
      part.metric = key.metric;
      part.median = median_of(vals);
      part.min = *std::min_element(vals.begin(), vals.end());
      part.max = *std::max_element(vals.begin(), vals.end());
      part.count = static_cast<int>(vals.size());
      report.lr_partitions.push_back(std::move(part));
    }
  }

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.good()) throw IoError("failed while writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

}  // namespace

const char* sweep_kind_name(SweepKind k) {
  switch (k) {
    case SweepKind::none: return "none";
    case SweepKind::missing: return "missing";
    case SweepKind::samples: return "samples";
    case SweepKind::lr: return "lr";
    case SweepKind::layers: return "layers";
  }
  throw std::invalid_argument("unknown sweep kind");
}

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "none") return SweepKind::none;
  if (name == "missing") return SweepKind::missing;
  if (name == "samples") return SweepKind::samples;
  if (name == "lr") return SweepKind::lr;
  if (name == "layers") return SweepKind::layers;
  throw InvalidInput("unknown sweep kind '" + name + "'");
}

const char* report_format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::figure_data: return "figure-data";
  }
  throw std::invalid_argument("unknown report format");
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "figure-data") return ReportFormat::figure_data;
  throw InvalidInput("unknown report format '" + name + "'");
}

GenConfig parse_gen_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid generator config JSON: ") + e.what());
  }
  try {
    return detail::gen_config_from_json(j.contains("gen") ? j.at("gen") : j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("generator config violates the schema: ") + e.what());
  }
}

SingleRunConfig parse_single_run_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid run config JSON: ") + e.what());
  }
  SingleRunConfig cfg;
  try {
    if (j.contains("gen")) cfg.gen = detail::gen_config_from_json(j.at("gen"));
    cfg.data_path = j.value("data", cfg.data_path);
    cfg.labels_path = j.value("labels", cfg.labels_path);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      cfg.split.train = s.value("train", cfg.split.train);
      cfg.split.val = s.value("val", cfg.split.val);
      cfg.split.test = s.value("test", cfg.split.test);
    }
    if (j.contains("backbone")) cfg.backbone = parse_backbone(j.at("backbone").get<std::string>());
    cfg.layers = j.value("layers", cfg.layers);
    cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
    if (j.contains("train")) cfg.train = detail::train_config_from_json(j.at("train"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("run config violates the schema: ") + e.what());
  }
  return cfg;
}

SingleRunArtifacts run_single(const SingleRunConfig& cfg) {
  if (cfg.data_path.empty() != cfg.labels_path.empty())
    throw InvalidInput("run config: data and labels paths come as a pair");
  const Dataset base = cfg.data_path.empty() ? synthesize(cfg.gen)
                                             : load_dataset(cfg.data_path, cfg.labels_path);
  Splits splits = split_stratified(base, cfg.split, derive_seed(cfg.train.seed, 11));
  const NormStats stats = compute_norm_stats(splits.train);
  const Dataset train_norm = apply_normalization(splits.train, stats);
  const Dataset val_norm = apply_normalization(splits.val, stats);
  const Dataset test_norm = apply_normalization(splits.test, stats);

  SingleRunArtifacts art;
  art.stats = stats;
  art.train_hash = dataset_hash(train_norm);
  art.val_hash = dataset_hash(val_norm);
  art.test_hash = dataset_hash(test_norm);
  art.mean_fill = compute_norm_stats(train_norm).mean;

  ArchConfig arch;
  arch.backbone = cfg.backbone;
  arch.layers = cfg.layers;
  arch.hidden_dim = cfg.hidden_dim;
  arch.input_dim = base.feature_count;
  arch.head = base.task == Task::classification ? HeadKind::linear_classifier
                                                : HeadKind::mlp_regressor;

  const bool baseline = cfg.train.protocol != Protocol::pai;
  const Dataset tr = baseline ? impute_dataset(train_norm, cfg.train.protocol, art.mean_fill)
                              : train_norm;
  const Dataset va = baseline ? impute_dataset(val_norm, cfg.train.protocol, art.mean_fill)
                              : val_norm;
  const Dataset te = baseline ? impute_dataset(test_norm, cfg.train.protocol, art.mean_fill)
                              : test_norm;

  art.run = train(tr, va, arch, cfg.train);
  art.test_scores = predict(art.run, te);
  for (const auto& rec : te.records) {
    art.test_ids.push_back(rec.id);
    art.test_labels.push_back(rec.label);
  }
  if (te.task == Task::classification) {
    const ClassificationEval ev = classification_metrics(art.test_labels, art.test_scores);
    art.test_metrics = {{"auroc", ev.auroc}, {"auprc", ev.auprc}, {"min_pse", ev.min_pse}};
  } else {
    const RegressionEval ev = regression_metrics(art.test_labels, art.test_scores);
    art.test_metrics = {{"mse", ev.mse}, {"rmse", ev.rmse}, {"mae", ev.mae}};
  }
  return art;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid experiment config JSON: ") + e.what());
  }
  return config_from_json_obj(j);
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  if (cfg.backbones.empty()) throw InvalidInput("experiment config: no backbones listed");
  if (cfg.protocols.empty()) throw InvalidInput("experiment config: no protocols listed");
  if (cfg.seeds.empty()) throw InvalidInput("experiment config: no seeds listed");
  auto has_dupes = [](auto v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) != v.end();
  };
  if (has_dupes(cfg.backbones)) throw InvalidInput("experiment config: duplicate backbone");
  if (has_dupes(cfg.protocols)) throw InvalidInput("experiment config: duplicate protocol");
  if (has_dupes(cfg.seeds)) throw InvalidInput("experiment config: duplicate seed");
  if (cfg.layers < 1) throw InvalidInput("experiment config: layers must be >= 1");
  if (cfg.hidden_dim < 1) throw InvalidInput("experiment config: hidden_dim must be >= 1");
  if (cfg.workers < 1) throw InvalidInput("experiment config: workers must be >= 1");
  if (cfg.data_path.empty() != cfg.labels_path.empty())
    throw InvalidInput("experiment config: data and labels paths come as a pair");
  if (cfg.train.epochs < 1 || cfg.train.batch_size < 1 || !(cfg.train.lr_model > 0.0) ||
      !(cfg.train.lr_prompt > 0.0))
    throw InvalidInput("experiment config: invalid training hyperparameters");

  const auto& sw = cfg.sweep;
  switch (sw.kind) {
    case SweepKind::none:
      if (!sw.values.empty())
        throw InvalidInput("experiment config: sweep values given without a sweep kind");
      break;
    case SweepKind::missing:
      if (sw.values.empty()) throw InvalidInput("missing sweep: empty grid");
      for (double v : sw.values)
        if (!(v > 0.0 && v < 1.0)) throw InvalidInput("missing sweep: rates must lie in (0,1)");
      for (std::size_t i = 1; i < sw.values.size(); ++i)
        if (!(sw.values[i] > sw.values[i - 1]))
          throw InvalidInput("missing sweep: rates must increase");
      break;
    case SweepKind::samples:
      if (sw.values.empty()) throw InvalidInput("samples sweep: empty grid");
      for (double v : sw.values)
        if (!(v > 0.0 && v <= 1.0))
          throw InvalidInput("samples sweep: fractions must lie in (0,1]");
      break;
    case SweepKind::lr:
      if (sw.values.empty()) throw InvalidInput("lr sweep: empty grid");
      for (double v : sw.values)
        if (!(v > 0.0)) throw InvalidInput("lr sweep: rates must be positive");
      break;
    case SweepKind::layers:
      if (sw.values.empty()) throw InvalidInput("layers sweep: empty grid");
      for (double v : sw.values) {
        const double r = std::llround(v);
        if (v != r || r < 1 || r > 3)
          throw InvalidInput("layers sweep: values must be whole numbers in 1..3");
      }
      break;
  }
}

ExperimentReport run_compare_protocols(const ExperimentConfig& cfg) {
  if (cfg.sweep.kind != SweepKind::none)
    throw InvalidInput("protocol comparison takes no sweep; run the sweep command instead");
  return run_engine(cfg);
}

ExperimentReport run_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep.kind == SweepKind::none)
    throw InvalidInput("sweep: config declares no sweep kind");
  return run_engine(cfg);
}

std::string report_to_json(const ExperimentReport& report) {
  nlohmann::json j;
  nlohmann::json manifest;
  manifest["config"] = config_to_json_obj(report.config);
  manifest["config_hash"] = report.config_hash;
  manifest["version"] = report.version;
  manifest["wall_time_seconds"] = report.wall_time_seconds;
  manifest["failed_rows"] = report.failed_rows;
  manifest["fairness_ok"] = report.fairness_ok;
  nlohmann::json fairness = nlohmann::json::array();
  for (const auto& f : report.fairness) {
    nlohmann::json e;
    e["seed"] = f.seed;
    e["sweep_value"] = f.sweep_value;
    e["train_hash"] = f.train_hash;
    e["val_hash"] = f.val_hash;
    e["test_hash"] = f.test_hash;
    e["per_protocol"] = f.per_protocol;
    e["protocols_match"] = f.protocols_match;
    fairness.push_back(std::move(e));
  }
  manifest["fairness"] = std::move(fairness);
  j["manifest"] = std::move(manifest);

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json e;
    e["sweep_value"] = r.sweep_value;
    e["backbone"] = backbone_name(r.backbone);
    e["protocol"] = protocol_name(r.protocol);
    e["seed"] = r.seed;
    e["failed"] = r.failed;
    if (r.failed) e["error"] = r.error;
    e["metrics"] = r.metrics;
    e["model_param_count"] = r.model_param_count;
    e["prompt_param_count"] = r.prompt_param_count;
    e["selection_epoch"] = r.selection_epoch;
    rows.push_back(std::move(e));
  }
  j["rows"] = std::move(rows);

  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    nlohmann::json e;
    e["sweep_value"] = a.sweep_value;
    e["backbone"] = backbone_name(a.backbone);
    e["protocol"] = protocol_name(a.protocol);
    e["metric"] = a.metric;
    e["median"] = a.median;
    e["min"] = a.min;
    e["max"] = a.max;
    e["count"] = a.count;
    aggregates.push_back(std::move(e));
  }
  j["aggregates"] = std::move(aggregates);

  nlohmann::json figure = nlohmann::json::array();
  for (const auto& f : report.figure_rows) {
    nlohmann::json e;
    e["sweep_value"] = f.sweep_value;
    e["protocol"] = protocol_name(f.protocol);
    e["metric"] = f.metric;
    e["median"] = f.median;
    e["min"] = f.min;
    e["max"] = f.max;
    figure.push_back(std::move(e));
  }
  j["figure_data"] = std::move(figure);

  nlohmann::json partitions = nlohmann::json::array();
  for (const auto& p : report.lr_partitions) {
    nlohmann::json e;
    e["partition"] = p.partition;
    e["protocol"] = protocol_name(p.protocol);
    e["metric"] = p.metric;
    e["median"] = p.median;
    e["min"] = p.min;
    e["max"] = p.max;
    e["count"] = p.count;
    partitions.push_back(std::move(e));
  }
  j["lr_partitions"] = std::move(partitions);

  return j.dump(2);
}

ExperimentReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid report JSON: ") + e.what());
  }
  ExperimentReport report;
  try {
    const auto& manifest = j.at("manifest");
    report.config = config_from_json_obj(manifest.at("config"));
    report.config_hash = manifest.at("config_hash").get<std::string>();
    report.version = manifest.at("version").get<std::string>();
    report.wall_time_seconds = manifest.at("wall_time_seconds").get<double>();
    report.failed_rows = manifest.at("failed_rows").get<int>();
    report.fairness_ok = manifest.at("fairness_ok").get<bool>();
    for (const auto& e : manifest.at("fairness")) {
      FairnessEntry f;
      f.seed = e.at("seed").get<std::uint64_t>();
      f.sweep_value = e.at("sweep_value").get<double>();
      f.train_hash = e.at("train_hash").get<std::string>();
      f.val_hash = e.at("val_hash").get<std::string>();
      f.test_hash = e.at("test_hash").get<std::string>();
      f.per_protocol =
          e.at("per_protocol").get<std::map<std::string, std::vector<std::string>>>();
      f.protocols_match = e.at("protocols_match").get<bool>();
      report.fairness.push_back(std::move(f));
    }
    for (const auto& e : j.at("rows")) {
      ReportRow r;
      r.sweep_value = e.at("sweep_value").get<double>();
      r.backbone = parse_backbone(e.at("backbone").get<std::string>());
      r.protocol = parse_protocol(e.at("protocol").get<std::string>());
      r.seed = e.at("seed").get<std::uint64_t>();
      r.failed = e.at("failed").get<bool>();
      r.error = e.value("error", "");
      r.metrics = e.at("metrics").get<std::map<std::string, double>>();
      r.model_param_count = e.at("model_param_count").get<long long>();
      r.prompt_param_count = e.at("prompt_param_count").get<long long>();
      r.selection_epoch = e.at("selection_epoch").get<int>();
      report.rows.push_back(std::move(r));
    }
    for (const auto& e : j.at("aggregates")) {
      AggregateRow a;
      a.sweep_value = e.at("sweep_value").get<double>();
      a.backbone = parse_backbone(e.at("backbone").get<std::string>());
      a.protocol = parse_protocol(e.at("protocol").get<std::string>());
      a.metric = e.at("metric").get<std::string>();
      a.median = e.at("median").get<double>();
      a.min = e.at("min").get<double>();
      a.max = e.at("max").get<double>();
      a.count = e.at("count").get<int>();
      report.aggregates.push_back(std::move(a));
    }
    for (const auto& e : j.at("figure_data")) {
      FigureRow f;
      f.sweep_value = e.at("sweep_value").get<double>();
      f.protocol = parse_protocol(e.at("protocol").get<std::string>());
      f.metric = e.at("metric").get<std::string>();
      f.median = e.at("median").get<double>();
      f.min = e.at("min").get<double>();
      f.max = e.at("max").get<double>();
      report.figure_rows.push_back(std::move(f));
    }
    for (const auto& e : j.at("lr_partitions")) {
      LrPartitionRow p;
      p.partition = e.at("partition").get<std::string>();
      p.protocol = parse_protocol(e.at("protocol").get<std::string>());
      p.metric = e.at("metric").get<std::string>();
      p.median = e.at("median").get<double>();
      p.min = e.at("min").get<double>();
      p.max = e.at("max").get<double>();
      p.count = e.at("count").get<int>();
      report.lr_partitions.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("report violates the schema: ") + e.what());
  }
  return report;
}

std::vector<std::string> emit_report(const ExperimentReport& report,
                                     const std::vector<ReportFormat>& formats,
                                     const std::string& dir) {
  if (formats.empty()) throw std::invalid_argument("emit_report: no formats requested");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());

  std::vector<std::string> written;
  auto wants = [&](ReportFormat f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
  };

  if (wants(ReportFormat::json)) {
    const std::filesystem::path p = std::filesystem::path(dir) / "report.json";
    atomic_write(p, report_to_json(report) + "\n");
    written.push_back(p.string());
  }

  if (wants(ReportFormat::csv)) {
    static const char* kMetricColumns[] = {"auroc", "auprc", "min_pse", "mse", "rmse", "mae"};
    std::string csv =
        "sweep_value,backbone,protocol,seed,status,auroc,auprc,min_pse,mse,rmse,mae,"
        "model_params,prompt_params,selection_epoch,error\n";
    for (const auto& r : report.rows) {
      csv += fmt(r.sweep_value);
      csv += ",";
      csv += backbone_name(r.backbone);
      csv += ",";
      csv += protocol_name(r.protocol);
      csv += ",";
      csv += std::to_string(r.seed);
      csv += ",";
      csv += r.failed ? "failed" : "ok";
      for (const char* metric : kMetricColumns) {
        csv += ",";
        auto it = r.metrics.find(metric);
        if (it != r.metrics.end()) csv += fmt(it->second);
      }
      csv += ",";
      csv += std::to_string(r.model_param_count);
      csv += ",";
      csv += std::to_string(r.prompt_param_count);
      csv += ",";
      csv += std::to_string(r.selection_epoch);
      csv += ",";
      csv += csv_escape(r.error);
      csv += "\n";
    }
    const std::filesystem::path p = std::filesystem::path(dir) / "report.csv";
    atomic_write(p, csv);
    written.push_back(p.string());
  }

  if (wants(ReportFormat::figure_data)) {
    std::string csv = "sweep_value,protocol,metric,median,min,max\n";
    for (const auto& f : report.figure_rows) {
      csv += fmt(f.sweep_value);
      csv += ",";
      csv += protocol_name(f.protocol);
      csv += ",";
      csv += f.metric;
      csv += ",";
      csv += fmt(f.median);
      csv += ",";
      csv += fmt(f.min);
      csv += ",";
      csv += fmt(f.max);
      csv += "\n";
    }
    const std::filesystem::path p = std::filesystem::path(dir) / "figure_data.csv";
    atomic_write(p, csv);
    written.push_back(p.string());
  }

  return written;
}

GradientAudit run_gradient_audit(int instances_per_combo, double eps, double tolerance,
                                 std::uint64_t seed) {
  if (instances_per_combo < 1)
    throw std::invalid_argument("gradient audit: need at least one instance per combination");
  if (!(eps > 0.0) || !(tolerance > 0.0))
    throw std::invalid_argument("gradient audit: eps and tolerance must be positive");

  GradientAudit audit;
  const BackboneKind backbones[] = {BackboneKind::rnn, BackboneKind::gru,
                                    BackboneKind::attention};
  const HeadKind heads[] = {HeadKind::linear_classifier, HeadKind::mlp_regressor};
  const Protocol protocols[] = {Protocol::pai, Protocol::zero};

  std::uint64_t combo = 0;
  for (BackboneKind backbone : backbones)
    for (HeadKind head : heads)
      for (Protocol protocol : protocols) {
        for (int inst = 0; inst < instances_per_combo; ++inst) {
          Rng rng(derive_seed(seed, combo * 1000 + static_cast<std::uint64_t>(inst)));
          const int length = 1 + static_cast<int>(rng.uniform_int(5));
          const int features = 1 + static_cast<int>(rng.uniform_int(3));
          const int hidden = 2 + static_cast<int>(rng.uniform_int(5));
          const int batch = 1 + static_cast<int>(rng.uniform_int(4));
          const int layers = 1 + static_cast<int>(rng.uniform_int(2));

          ArchConfig arch;
          arch.backbone = backbone;
          arch.layers = layers;
          arch.hidden_dim = hidden;
          arch.head = head;
          arch.input_dim = features;
          ModelParams params = init_model(arch, rng.next_u64());

          FeaturePrompt prompt;
          if (protocol == Protocol::pai) {
            std::vector<double> v(features);
            for (auto& x : v) x = rng.uniform(-0.5, 0.5);
            prompt.v = tensor_create({features}, std::move(v), /*requires_grad=*/true);
            prompt.init_strategy = PromptInit::uniform;
          }

          std::vector<Tensor> xs, masks;
          std::vector<double> labels;
          for (int b = 0; b < batch; ++b) {
            std::vector<double> values(static_cast<std::size_t>(length) * features);
            std::vector<double> mask(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) {
              const bool observed = rng.uniform() < 0.75;
              mask[i] = observed ? 1.0 : 0.0;
              values[i] = observed ? rng.normal() : 0.0;  // zero protocol fill
            }
            xs.push_back(tensor_create({length, features}, std::move(values)));
            masks.push_back(tensor_create({length, features}, std::move(mask)));
            labels.push_back(head == HeadKind::linear_classifier
                                 ? static_cast<double>(rng.uniform_int(2))
                                 : rng.normal());
          }

          auto forward = [&](Tape& tape) {
            std::vector<Tensor> outs;
            outs.reserve(xs.size());
            for (std::size_t b = 0; b < xs.size(); ++b) {
              Tensor x = protocol == Protocol::pai
                             ? fill_prompt(tape, xs[b], masks[b], prompt)
                             : xs[b];
              Tensor e = backbone_forward(tape, arch, params, x, length);
              outs.push_back(head_forward(tape, arch, params, e));
            }
            return head == HeadKind::linear_classifier
                       ? loss_classification(tape, outs, labels)
                       : loss_regression(tape, outs, labels);
          };

          Tape tape;
          Tensor loss = forward(tape);
          tape.backward(loss);

          std::vector<Tensor> checked;
          for (const auto& [name, t] : params.named) checked.push_back(t);
          if (protocol == Protocol::pai) checked.push_back(prompt.v);
          std::vector<std::vector<double>> analytic;
          for (const auto& t : checked) {
            analytic.push_back(t->grad.empty() ? std::vector<double>(t->size(), 0.0)
                                               : t->grad);
            t->grad.clear();
          }

          auto f = [&]() {
            Tape eval(/*recording=*/false);
            return forward(eval)->data[0];
          };

          GradientCheckCase result;
          result.backbone = backbone;
          result.head = head;
          result.protocol = protocol;
          result.instance = inst;
          result.max_rel_error = 0.0;
          for (std::size_t t = 0; t < checked.size(); ++t) {
            const std::vector<double> numeric = finite_difference(f, checked[t], eps);
            result.max_rel_error =
                std::max(result.max_rel_error, max_relative_error(analytic[t], numeric));
          }
          result.pass = result.max_rel_error <= tolerance;
          if (!result.pass) audit.all_pass = false;
          audit.worst = std::max(audit.worst, result.max_rel_error);
          audit.cases.push_back(result);
        }
        ++combo;
      }
  return audit;
}

}  // namespace prompt_impute
