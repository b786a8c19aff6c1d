// Command-line front end. Every command takes one JSON config and writes its
// artifacts into a directory, so an experiment is reproducible from a single
// document. Exit codes: 0 ok, 1 bad config, 2 failures recorded in the
// result, 3 I/O trouble.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptimpute/data.hpp"
#include "promptimpute/errors.hpp"
#include "promptimpute/experiments.hpp"
#include "promptimpute/metrics.hpp"
#include "promptimpute/models.hpp"
#include "promptimpute/training.hpp"
#include "promptimpute/version.hpp"

using namespace prompt_impute;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out.good()) throw IoError("failed while writing '" + path.string() + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<ReportFormat> resolve_formats(const std::vector<std::string>& names) {
  if (names.empty())
    return {ReportFormat::json, ReportFormat::csv, ReportFormat::figure_data};
  std::vector<ReportFormat> formats;
  for (const auto& n : names) formats.push_back(parse_report_format(n));
  return formats;
}

void write_predictions_csv(const std::filesystem::path& path, const std::vector<std::string>& ids,
                           const std::vector<double>& labels,
                           const std::vector<double>& scores) {
  std::string csv = "record_id,label,score\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    csv += ids[i] + "," + fmt(labels[i]) + "," + fmt(scores[i]) + "\n";
  write_file(path, csv);
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const StratificationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SubsampleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {  // diverged/undefined-metric/... : a failed run
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int cmd_synthesize(const std::string& config_path, const std::string& out_dir,
                   const std::vector<std::uint64_t>& seeds) {
  GenConfig gen = parse_gen_config(slurp(config_path));
  std::vector<std::uint64_t> use = seeds.empty() ? std::vector<std::uint64_t>{gen.seed} : seeds;
  for (std::uint64_t seed : use) {
    const Dataset ds = synthesize(gen, seed);
    std::filesystem::path dir = out_dir;
    if (use.size() > 1) dir /= "seed_" + std::to_string(seed);
    ensure_dir(dir.string());
    save_dataset_csv(ds, (dir / "data.csv").string(), (dir / "labels.csv").string());
    save_dataset_json(ds, (dir / "dataset.json").string());

    nlohmann::json manifest;
    manifest["config"] = {{"record_count", gen.record_count},
                          {"feature_count", gen.feature_count},
                          {"length_min", gen.length_min},
                          {"length_max", gen.length_max},
                          {"missing_rate", gen.missing_rate},
                          {"missing_mode", missing_mode_name(gen.missing_mode)},
                          {"task", task_name(gen.task)},
                          {"label_noise", gen.label_noise},
                          {"seed", seed}};
    manifest["records"] = static_cast<int>(ds.records.size());
    manifest["feature_count"] = ds.feature_count;
    manifest["task"] = task_name(ds.task);
    manifest["observed_missing_rate"] = observed_missing_rate(ds);
    manifest["dataset_hash"] = dataset_hash(ds);
    manifest["version"] = kVersion;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    std::cout << "wrote " << ds.records.size() << " records (missing rate "
              << fmt(observed_missing_rate(ds)) << ") to " << dir.string() << "\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::uint64_t>& seeds) {
  SingleRunConfig cfg = parse_single_run_config(slurp(config_path));
  if (!seeds.empty()) cfg.train.seed = seeds.back();
  const SingleRunArtifacts art = run_single(cfg);

  ensure_dir(out_dir);
  save_run(art.run, art.stats, out_dir,
           cfg.train.protocol == Protocol::mean ? art.mean_fill : std::vector<double>{});
  write_predictions_csv(std::filesystem::path(out_dir) / "predictions.csv", art.test_ids,
                        art.test_labels, art.test_scores);

  const ParamCount pc =
      count_parameters(art.run.params, art.run.prompt ? &*art.run.prompt : nullptr);
  nlohmann::json metrics;
  metrics["test"] = art.test_metrics;
  metrics["selection_epoch"] = art.run.selection_epoch;
  metrics["split_hashes"] = {{"train", art.train_hash}, {"val", art.val_hash},
                             {"test", art.test_hash}};
  metrics["parameters"] = {{"model", pc.model_count}, {"prompt", pc.prompt_count},
                           {"prompt_share", pc.ratio}};
  write_file(std::filesystem::path(out_dir) / "metrics.json", metrics.dump(2) + "\n");

  std::cout << "run saved to " << out_dir << " (selected epoch " << art.run.selection_epoch
            << ")\n";
  for (const auto& [name, value] : art.test_metrics)
    std::cout << "  test " << name << " = " << fmt(value) << "\n";
  return 0;
}

int cmd_predict(const std::string& config_path, const std::string& out_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(config_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid predict config JSON: ") + e.what());
  }
  std::string run_dir, data_path, labels_path;
  try {
    run_dir = j.at("run").get<std::string>();
    data_path = j.at("data").get<std::string>();
    labels_path = j.at("labels").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("predict config needs run/data/labels: ") + e.what());
  }

  const LoadedRun loaded = load_run(run_dir);
  Dataset ds = load_dataset(data_path, labels_path);
  ds = apply_normalization(ds, loaded.stats);
  if (loaded.run.config.protocol != Protocol::pai) {
    if (loaded.run.config.protocol == Protocol::mean && loaded.mean_fill.empty())
      throw StateError("run directory stores no mean-imputation fill vector");
    ds = impute_dataset(ds, loaded.run.config.protocol, loaded.mean_fill);
  }
  const std::vector<double> scores = predict(loaded.run, ds);

  std::vector<std::string> ids;
  std::vector<double> labels;
  for (const auto& rec : ds.records) {
    ids.push_back(rec.id);
    labels.push_back(rec.label);
  }

  ensure_dir(out_dir);
  write_predictions_csv(std::filesystem::path(out_dir) / "predictions.csv", ids, labels, scores);

  nlohmann::json metrics;
  if (ds.task == Task::classification) {
    const ClassificationEval ev = classification_metrics(labels, scores);
    metrics = {{"auroc", ev.auroc}, {"auprc", ev.auprc}, {"min_pse", ev.min_pse}};
  } else {
    const RegressionEval ev = regression_metrics(labels, scores);
    metrics = {{"mse", ev.mse}, {"rmse", ev.rmse}, {"mae", ev.mae}};
  }
  write_file(std::filesystem::path(out_dir) / "metrics.json", metrics.dump(2) + "\n");

  std::cout << "scored " << scores.size() << " records into " << out_dir << "\n";
  for (const auto& [name, value] : metrics.items())
    std::cout << "  " << name << " = " << fmt(value.get<double>()) << "\n";
  return 0;
}

int run_experiment(bool sweep_mode, const std::string& config_path, const std::string& out_dir,
                   const std::vector<std::uint64_t>& seeds, int workers,
                   const std::vector<std::string>& format_names) {
  ExperimentConfig cfg = parse_experiment_config(slurp(config_path));
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (!seeds.empty()) cfg.seeds = seeds;
  if (workers > 0) cfg.workers = workers;

  const ExperimentReport report =
      sweep_mode ? run_sweep(cfg) : run_compare_protocols(cfg);
  const std::vector<std::string> written =
      emit_report(report, resolve_formats(format_names), cfg.output_dir);

  std::cout << report.rows.size() << " runs, " << report.failed_rows << " failed, fairness "
            << (report.fairness_ok ? "ok" : "VIOLATED") << ", wall time "
            << fmt(report.wall_time_seconds) << "s\n";
  for (const auto& path : written) std::cout << "  " << path << "\n";
  for (const auto& row : report.rows)
    if (row.failed)
      std::cerr << "failed: " << backbone_name(row.backbone) << "/" << protocol_name(row.protocol)
                << " seed " << row.seed << " value " << fmt(row.sweep_value) << ": " << row.error
                << "\n";
  return (report.failed_rows > 0 || !report.fairness_ok) ? 2 : 0;
}

int cmd_gradcheck(const std::string& config_path, const std::string& out_dir) {
  int instances = 20;
  double eps = 1e-4, tolerance = 1e-4;
  std::uint64_t seed = 1;
  if (!config_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(slurp(config_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid gradcheck config JSON: ") + e.what());
    }
    instances = j.value("instances", instances);
    eps = j.value("eps", eps);
    tolerance = j.value("tolerance", tolerance);
    seed = j.value("seed", seed);
  }

  const GradientAudit audit = run_gradient_audit(instances, eps, tolerance, seed);

  // One line per (backbone, head, protocol) combination.
  for (std::size_t i = 0; i < audit.cases.size();) {
    const auto& first = audit.cases[i];
    double worst = 0.0;
    int passed = 0, total = 0;
    for (; i < audit.cases.size(); ++i) {
      const auto& c = audit.cases[i];
      if (c.backbone != first.backbone || c.head != first.head || c.protocol != first.protocol)
        break;
      worst = std::max(worst, c.max_rel_error);
      passed += c.pass ? 1 : 0;
      ++total;
    }
    std::cout << backbone_name(first.backbone) << " + " << head_name(first.head) << " + "
              << protocol_name(first.protocol) << ": " << passed << "/" << total
              << " instances, worst rel err " << fmt(worst) << "\n";
  }
  std::cout << (audit.all_pass ? "all gradients verified" : "GRADIENT MISMATCH")
            << " (worst " << fmt(audit.worst) << ")\n";

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : audit.cases)
      cases.push_back({{"backbone", backbone_name(c.backbone)},
                       {"head", head_name(c.head)},
                       {"protocol", protocol_name(c.protocol)},
                       {"instance", c.instance},
                       {"max_rel_error", c.max_rel_error},
                       {"pass", c.pass}});
    nlohmann::json out = {{"eps", eps},
                          {"tolerance", tolerance},
                          {"seed", seed},
                          {"all_pass", audit.all_pass},
                          {"worst", audit.worst},
                          {"cases", std::move(cases)}};
    write_file(std::filesystem::path(out_dir) / "gradcheck.json", out.dump(2) + "\n");
  }
  return audit.all_pass ? 0 : 2;
}

int cmd_report(const std::string& config_path, const std::string& out_dir,
               const std::vector<std::string>& format_names) {
  const ExperimentReport report = report_from_json(slurp(config_path));
  std::string dir = out_dir;
  if (dir.empty()) {
    dir = std::filesystem::path(config_path).parent_path().string();
    if (dir.empty()) dir = ".";
  }
  const std::vector<std::string> written =
      emit_report(report, resolve_formats(format_names), dir);
  for (const auto& path : written) std::cout << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Sequence prediction on incomplete multivariate time series: train with a "
      "learnable per-feature fill vector or classic imputation baselines, then "
      "compare and sweep."};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> formats;
  int workers = 0;

  auto* synthesize_cmd =
      app.add_subcommand("synthesize", "Generate a synthetic dataset (CSV pair + JSON)");
  synthesize_cmd->add_option("--config", config_path, "generator config JSON")->required();
  synthesize_cmd->add_option("--out", out_dir, "output directory")->required();
  synthesize_cmd->add_option("--seed", seeds, "generator seed (repeatable)");

  auto* train_cmd = app.add_subcommand("train", "Train one model and save the run directory");
  train_cmd->add_option("--config", config_path, "run config JSON")->required();
  train_cmd->add_option("--out", out_dir, "run directory")->required();
  train_cmd->add_option("--seed", seeds, "training seed override");

  auto* predict_cmd = app.add_subcommand("predict", "Score a dataset with a saved run");
  predict_cmd->add_option("--config", config_path, "predict config JSON (run/data/labels)")
      ->required();
  predict_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* compare_cmd =
      app.add_subcommand("compare", "Train every backbone x protocol x seed cell and report");
  compare_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  compare_cmd->add_option("--out", out_dir, "output directory override");
  compare_cmd->add_option("--seed", seeds, "seed list override (repeatable)");
  compare_cmd->add_option("--workers", workers, "parallel training jobs");
  compare_cmd->add_option("--format", formats, "json|csv|figure-data (repeatable; default all)");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the comparison across a perturbation grid");
  sweep_cmd->add_option("--config", config_path, "experiment config JSON with a sweep spec")
      ->required();
  sweep_cmd->add_option("--out", out_dir, "output directory override");
  sweep_cmd->add_option("--seed", seeds, "seed list override (repeatable)");
  sweep_cmd->add_option("--workers", workers, "parallel training jobs");
  sweep_cmd->add_option("--format", formats, "json|csv|figure-data (repeatable; default all)");

  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "Verify analytic gradients against finite differences on random models");
  gradcheck_cmd->add_option("--config", config_path,
                            "optional JSON: instances/eps/tolerance/seed");
  gradcheck_cmd->add_option("--out", out_dir, "directory for gradcheck.json");

  auto* report_cmd =
      app.add_subcommand("report", "Re-emit CSV/figure data from an existing report.json");
  report_cmd->add_option("--config", config_path, "path to report.json")->required();
  report_cmd->add_option("--out", out_dir, "output directory (default: beside the config)");
  report_cmd->add_option("--format", formats, "json|csv|figure-data (repeatable; default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (synthesize_cmd->parsed())
    return guarded([&] { return cmd_synthesize(config_path, out_dir, seeds); });
  if (train_cmd->parsed()) return guarded([&] { return cmd_train(config_path, out_dir, seeds); });
  if (predict_cmd->parsed()) return guarded([&] { return cmd_predict(config_path, out_dir); });
  if (compare_cmd->parsed())
    return guarded([&] { return run_experiment(false, config_path, out_dir, seeds, workers,
                                               formats); });
  if (sweep_cmd->parsed())
    return guarded([&] { return run_experiment(true, config_path, out_dir, seeds, workers,
                                               formats); });
  if (gradcheck_cmd->parsed()) return guarded([&] { return cmd_gradcheck(config_path, out_dir); });
  if (report_cmd->parsed())
    return guarded([&] { return cmd_report(config_path, out_dir, formats); });
  return 1;
}
