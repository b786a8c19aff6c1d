// End-to-end tests of the command-line tool: every subcommand is exercised
// through a real child process, checking exit codes, artifact files, stdout
// shape, and byte-level reproducibility of reruns. The binary under test
// comes from the PROMPTIMPUTE_CLI environment variable (ctest sets it); a
// build-tree default keeps the suite runnable by hand.
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptimpute/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string& cli_path() {
  static const std::string path = [] {
    const char* env = std::getenv("PROMPTIMPUTE_CLI");
    if (env != nullptr && *env != '\0') return std::string(env);
    return std::string("/root/proj/build-core/tools/promptimpute");
  }();
  return path;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

// Runs the tool with the given arguments, capturing exit code and both
// streams. `env_prefix` lets a case inject environment variables.
CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
  static int counter = 0;
  const fs::path out_file =
      fs::temp_directory_path() / ("cli_out_" + std::to_string(::getpid()) + "_" +
                                   std::to_string(counter));
  const fs::path err_file =
      fs::temp_directory_path() / ("cli_err_" + std::to_string(::getpid()) + "_" +
                                   std::to_string(counter));
  ++counter;

  std::string cmd = env_prefix.empty() ? "" : env_prefix + " ";
  cmd += "'" + cli_path() + "' " + args + " >'" + out_file.string() + "' 2>'" +
         err_file.string() + "'";
  const int raw = std::system(cmd.c_str());

  CliResult r;
  r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  fs::remove(out_file);
  fs::remove(err_file);
  return r;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

json small_gen_config(std::uint64_t seed = 7) {
  return json{{"record_count", 40},  {"feature_count", 3}, {"length_min", 4},
              {"length_max", 8},     {"missing_rate", 0.3}, {"missing_mode", "informative"},
              {"task", "classification"}, {"label_noise", 0.1}, {"seed", seed}};
}

json small_train_config() {
  json cfg;
  cfg["gen"] = small_gen_config(5);
  cfg["gen"]["record_count"] = 60;
  cfg["backbone"] = "rnn";
  cfg["layers"] = 1;
  cfg["hidden_dim"] = 4;
  cfg["train"] = {{"epochs", 2}, {"batch_size", 32}, {"protocol", "pai"}, {"seed", 1}};
  return cfg;
}

json small_experiment_config(const fs::path& out_dir) {
  json cfg;
  cfg["gen"] = small_gen_config(7);
  cfg["gen"]["record_count"] = 70;
  cfg["backbones"] = {"rnn"};
  cfg["protocols"] = {"pai", "zero"};
  cfg["seeds"] = {1, 2};
  cfg["layers"] = 1;
  cfg["hidden_dim"] = 4;
  cfg["train"] = {{"epochs", 2}, {"batch_size", 32}};
  cfg["output_dir"] = out_dir.string();
  cfg["workers"] = 1;
  return cfg;
}

// report.json embeds wall time, so rerun comparisons look at everything else.
json report_without_wall_time(const fs::path& p) {
  json j = json::parse(slurp(p));
  REQUIRE(j.contains("manifest"));
  j["manifest"].erase("wall_time_seconds");
  return j;
}

}  // namespace

TEST_CASE("binary under test exists") {
  INFO("PROMPTIMPUTE_CLI=" << cli_path());
  REQUIRE(fs::exists(cli_path()));
}

TEST_CASE("version flag and argument errors") {
  const CliResult version = run_cli("--version");
  CHECK(version.code == 0);
  CHECK(version.out.find(prompt_impute::kVersion) != std::string::npos);

  CHECK(run_cli("--help").code == 0);

  // A subcommand is mandatory; unknown or incomplete invocations are usage
  // errors, not crashes.
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("synthesize").code == 1);              // missing required flags
  CHECK(run_cli("train --config x.json").code == 1);   // missing --out
}

TEST_CASE("synthesize writes a reproducible dataset bundle") {
  TempDir tmp;
  spit(tmp / "gen.json", small_gen_config().dump());

  const fs::path dir_a = tmp / "a";
  const CliResult first = run_cli("synthesize --config " + quoted(tmp / "gen.json") +
                                  " --out " + quoted(dir_a));
  INFO(first.err);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("wrote 40 records") != std::string::npos);

  for (const char* name : {"data.csv", "labels.csv", "dataset.json", "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir_a / name), name);

  const std::string data_csv = slurp(dir_a / "data.csv");
  CHECK(data_csv.rfind("record_id,time_index,f1,f2,f3\n", 0) == 0);

  const json manifest = json::parse(slurp(dir_a / "manifest.json"));
  CHECK(manifest.at("records").get<int>() == 40);
  CHECK(manifest.at("feature_count").get<int>() == 3);
  CHECK(manifest.at("task").get<std::string>() == "classification");
  CHECK(manifest.at("dataset_hash").get<std::string>().size() == 16);
  CHECK(manifest.at("version").get<std::string>() == prompt_impute::kVersion);
  const double rate = manifest.at("observed_missing_rate").get<double>();
  CHECK(rate > 0.15);
  CHECK(rate < 0.45);

  // Same config, fresh directory: every artifact byte-identical.
  const fs::path dir_b = tmp / "b";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(dir_b))
              .code == 0);
  for (const char* name : {"data.csv", "labels.csv", "dataset.json", "manifest.json"})
    CHECK_MESSAGE(slurp(dir_a / name) == slurp(dir_b / name), name);

  // The generator config may arrive nested under "gen" (the same document a
  // training config uses); output must not change.
  spit(tmp / "nested.json", json{{"gen", small_gen_config()}}.dump());
  const fs::path dir_c = tmp / "c";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "nested.json") + " --out " +
                  quoted(dir_c))
              .code == 0);
  CHECK(slurp(dir_a / "data.csv") == slurp(dir_c / "data.csv"));
}

TEST_CASE("synthesize seed handling: repeated flag fans out, single flag overrides") {
  TempDir tmp;
  spit(tmp / "gen.json", small_gen_config().dump());

  const fs::path multi = tmp / "multi";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " + quoted(multi) +
                  " --seed 3 --seed 4")
              .code == 0);
  REQUIRE(fs::exists(multi / "seed_3" / "data.csv"));
  REQUIRE(fs::exists(multi / "seed_4" / "data.csv"));
  CHECK(slurp(multi / "seed_3" / "data.csv") != slurp(multi / "seed_4" / "data.csv"));

  const fs::path single = tmp / "single";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(single) + " --seed 3")
              .code == 0);
  CHECK(fs::exists(single / "data.csv"));  // one seed: no per-seed subdirectory
  CHECK(slurp(single / "data.csv") == slurp(multi / "seed_3" / "data.csv"));
}

TEST_CASE("exit codes distinguish I/O trouble, bad JSON, and bad schema") {
  TempDir tmp;

  // Nonexistent config file: I/O.
  CHECK(run_cli("synthesize --config " + quoted(tmp / "missing.json") + " --out " +
                quoted(tmp / "o1"))
            .code == 3);

  // Unparseable JSON: config error.
  spit(tmp / "broken.json", "{ nope");
  const CliResult broken = run_cli("synthesize --config " + quoted(tmp / "broken.json") +
                                   " --out " + quoted(tmp / "o2"));
  CHECK(broken.code == 1);
  CHECK(broken.err.find("error:") != std::string::npos);

  // Parseable but invalid values: config error.
  json bad = small_gen_config();
  bad["missing_rate"] = 2.0;
  spit(tmp / "bad.json", bad.dump());
  CHECK(run_cli("synthesize --config " + quoted(tmp / "bad.json") + " --out " +
                quoted(tmp / "o3"))
            .code == 1);

  // Same mapping for train.
  CHECK(run_cli("train --config " + quoted(tmp / "missing.json") + " --out " +
                quoted(tmp / "o4"))
            .code == 3);
  json bad_train = small_train_config();
  bad_train["train"]["epochs"] = 0;
  spit(tmp / "bad_train.json", bad_train.dump());
  CHECK(run_cli("train --config " + quoted(tmp / "bad_train.json") + " --out " +
                quoted(tmp / "o5"))
            .code == 1);
}

TEST_CASE("train writes a complete run directory and reruns bit-identically") {
  TempDir tmp;
  spit(tmp / "run.json", small_train_config().dump());

  const fs::path run_a = tmp / "run_a";
  const CliResult first =
      run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(run_a));
  INFO(first.err);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("run saved to") != std::string::npos);
  CHECK(first.out.find("test auroc") != std::string::npos);

  for (const char* name : {"manifest.json", "history.csv", "predictions.csv", "metrics.json"})
    CHECK_MESSAGE(fs::exists(run_a / name), name);
  CHECK(fs::is_directory(run_a / "checkpoint"));
  CHECK(fs::exists(run_a / "checkpoint" / "prompt.json"));  // learnable fill protocol

  const json metrics = json::parse(slurp(run_a / "metrics.json"));
  for (const char* key : {"auroc", "auprc", "min_pse"}) {
    const double v = metrics.at("test").at(key).get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(metrics.at("selection_epoch").get<int>() >= 1);
  CHECK(metrics.at("selection_epoch").get<int>() <= 2);
  for (const char* key : {"train", "val", "test"})
    CHECK(metrics.at("split_hashes").at(key).get<std::string>().size() == 16);
  CHECK(metrics.at("parameters").at("model").get<int>() > 0);
  CHECK(metrics.at("parameters").at("prompt").get<int>() == 3);
  CHECK(metrics.at("parameters").at("prompt_share").get<double>() > 0.0);

  const std::string preds = slurp(run_a / "predictions.csv");
  CHECK(preds.rfind("record_id,label,score\n", 0) == 0);

  const fs::path run_b = tmp / "run_b";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(run_b))
              .code == 0);
  for (const char* name : {"manifest.json", "history.csv", "predictions.csv", "metrics.json"})
    CHECK_MESSAGE(slurp(run_a / name) == slurp(run_b / name), name);
}

TEST_CASE("train --seed overrides the config seed") {
  TempDir tmp;
  spit(tmp / "run.json", small_train_config().dump());

  json nine = small_train_config();
  nine["train"]["seed"] = 9;
  spit(tmp / "run9.json", nine.dump());

  const fs::path via_flag = tmp / "via_flag";
  const fs::path via_config = tmp / "via_config";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(via_flag) +
                  " --seed 9")
              .code == 0);
  REQUIRE(run_cli("train --config " + quoted(tmp / "run9.json") + " --out " +
                  quoted(via_config))
              .code == 0);
  CHECK(slurp(via_flag / "predictions.csv") == slurp(via_config / "predictions.csv"));
  // And the override genuinely changes the run relative to seed 1.
  const fs::path seed_one = tmp / "seed_one";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(seed_one))
              .code == 0);
  CHECK(slurp(via_flag / "predictions.csv") != slurp(seed_one / "predictions.csv"));
}

TEST_CASE("predict scores a CSV pair with a saved run") {
  TempDir tmp;

  // Fresh data from the generator, a trained run on the same feature count.
  spit(tmp / "gen.json", small_gen_config(21).dump());
  const fs::path data_dir = tmp / "data";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(data_dir))
              .code == 0);
  spit(tmp / "run.json", small_train_config().dump());
  const fs::path run_dir = tmp / "run";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(run_dir))
              .code == 0);

  const json pred_cfg = {{"run", run_dir.string()},
                         {"data", (data_dir / "data.csv").string()},
                         {"labels", (data_dir / "labels.csv").string()}};
  spit(tmp / "pred.json", pred_cfg.dump());

  const fs::path out_a = tmp / "scored_a";
  const CliResult first =
      run_cli("predict --config " + quoted(tmp / "pred.json") + " --out " + quoted(out_a));
  INFO(first.err);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("scored 40 records") != std::string::npos);

  const json metrics = json::parse(slurp(out_a / "metrics.json"));
  for (const char* key : {"auroc", "auprc", "min_pse"}) CHECK(metrics.contains(key));

  // Scores are probabilities and the CSV has one row per record.
  std::istringstream preds(slurp(out_a / "predictions.csv"));
  std::string line;
  std::getline(preds, line);
  CHECK(line == "record_id,label,score");
  int rows = 0;
  while (std::getline(preds, line)) {
    const auto last_comma = line.rfind(',');
    REQUIRE(last_comma != std::string::npos);
    const double score = std::stod(line.substr(last_comma + 1));
    CHECK(score > 0.0);
    CHECK(score < 1.0);
    ++rows;
  }
  CHECK(rows == 40);

  const fs::path out_b = tmp / "scored_b";
  REQUIRE(run_cli("predict --config " + quoted(tmp / "pred.json") + " --out " + quoted(out_b))
              .code == 0);
  CHECK(slurp(out_a / "predictions.csv") == slurp(out_b / "predictions.csv"));
  CHECK(slurp(out_a / "metrics.json") == slurp(out_b / "metrics.json"));

  // Config missing one of run/data/labels is a schema error.
  spit(tmp / "pred_short.json", json{{"run", run_dir.string()}}.dump());
  CHECK(run_cli("predict --config " + quoted(tmp / "pred_short.json") + " --out " +
                quoted(tmp / "o"))
            .code == 1);

  // Pointing at a run directory that does not exist is I/O trouble.
  const json pred_bad_run = {{"run", (tmp / "no_such_run").string()},
                             {"data", (data_dir / "data.csv").string()},
                             {"labels", (data_dir / "labels.csv").string()}};
  spit(tmp / "pred_bad_run.json", pred_bad_run.dump());
  CHECK(run_cli("predict --config " + quoted(tmp / "pred_bad_run.json") + " --out " +
                quoted(tmp / "o2"))
            .code == 3);
}

TEST_CASE("predict rejects feature mismatch and a gutted mean-fill run") {
  TempDir tmp;

  // Train on 3 features, score 5-feature data: schema error (exit 1).
  spit(tmp / "run.json", small_train_config().dump());
  const fs::path run_dir = tmp / "run";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(run_dir))
              .code == 0);

  json wide_gen = small_gen_config(3);
  wide_gen["feature_count"] = 5;
  spit(tmp / "wide_gen.json", wide_gen.dump());
  const fs::path wide_dir = tmp / "wide";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "wide_gen.json") + " --out " +
                  quoted(wide_dir))
              .code == 0);

  const json mismatch = {{"run", run_dir.string()},
                         {"data", (wide_dir / "data.csv").string()},
                         {"labels", (wide_dir / "labels.csv").string()}};
  spit(tmp / "mismatch.json", mismatch.dump());
  CHECK(run_cli("predict --config " + quoted(tmp / "mismatch.json") + " --out " +
                quoted(tmp / "o"))
            .code == 1);

  // A mean-imputation run whose manifest lost its fill vector cannot score
  // incomplete data; that is a failed operation (exit 2), not a usage error.
  json mean_cfg = small_train_config();
  mean_cfg["train"]["protocol"] = "mean";
  spit(tmp / "mean.json", mean_cfg.dump());
  const fs::path mean_run = tmp / "mean_run";
  REQUIRE(run_cli("train --config " + quoted(tmp / "mean.json") + " --out " + quoted(mean_run))
              .code == 0);

  json manifest = json::parse(slurp(mean_run / "manifest.json"));
  REQUIRE(manifest.contains("mean_fill"));
  manifest.erase("mean_fill");
  spit(mean_run / "manifest.json", manifest.dump(2) + "\n");

  spit(tmp / "gen.json", small_gen_config(21).dump());
  const fs::path data_dir = tmp / "data";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(data_dir))
              .code == 0);
  const json gutted = {{"run", mean_run.string()},
                       {"data", (data_dir / "data.csv").string()},
                       {"labels", (data_dir / "labels.csv").string()}};
  spit(tmp / "gutted.json", gutted.dump());
  const CliResult r = run_cli("predict --config " + quoted(tmp / "gutted.json") + " --out " +
                              quoted(tmp / "o2"));
  CHECK(r.code == 2);
  CHECK(r.err.find("mean-imputation fill") != std::string::npos);
}

TEST_CASE("compare trains the full grid and emits a reproducible report") {
  TempDir tmp;
  const fs::path out_dir = tmp / "report";
  spit(tmp / "cmp.json", small_experiment_config(out_dir).dump());

  const CliResult first = run_cli("compare --config " + quoted(tmp / "cmp.json"));
  INFO(first.err);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("4 runs, 0 failed, fairness ok") != std::string::npos);

  for (const char* name : {"report.json", "report.csv", "figure_data.csv"})
    CHECK_MESSAGE(fs::exists(out_dir / name), name);

  const json report = json::parse(slurp(out_dir / "report.json"));
  CHECK(report.at("rows").size() == 4);  // 1 backbone x 2 protocols x 2 seeds
  for (const auto& row : report.at("rows")) {
    CHECK_FALSE(row.at("failed").get<bool>());
    const double auroc = row.at("metrics").at("auroc").get<double>();
    CHECK(auroc >= 0.0);
    CHECK(auroc <= 1.0);
  }
  CHECK(report.at("manifest").at("fairness_ok").get<bool>());

  // Rerun with the same config: CSVs byte-identical, JSON identical modulo
  // the recorded wall time.
  const std::string csv_before = slurp(out_dir / "report.csv");
  const std::string figure_before = slurp(out_dir / "figure_data.csv");
  const json json_before = report_without_wall_time(out_dir / "report.json");
  REQUIRE(run_cli("compare --config " + quoted(tmp / "cmp.json")).code == 0);
  CHECK(slurp(out_dir / "report.csv") == csv_before);
  CHECK(slurp(out_dir / "figure_data.csv") == figure_before);
  CHECK(report_without_wall_time(out_dir / "report.json") == json_before);

  // An --out override redirects the artifacts without changing the science:
  // row metrics match even though the stored output path (and with it the
  // config fingerprint) differs.
  const fs::path out2 = tmp / "report2";
  REQUIRE(run_cli("compare --config " + quoted(tmp / "cmp.json") + " --out " + quoted(out2))
              .code == 0);
  const json moved = json::parse(slurp(out2 / "report.json"));
  CHECK(moved.at("rows") == report.at("rows"));
  CHECK(moved.at("manifest").at("config").at("output_dir") == out2.string());

  // --format narrows the emitted files.
  const fs::path only_csv = tmp / "only_csv";
  REQUIRE(run_cli("compare --config " + quoted(tmp / "cmp.json") + " --out " +
                  quoted(only_csv) + " --format csv")
              .code == 0);
  CHECK(fs::exists(only_csv / "report.csv"));
  CHECK_FALSE(fs::exists(only_csv / "report.json"));
  CHECK_FALSE(fs::exists(only_csv / "figure_data.csv"));
  CHECK(slurp(only_csv / "report.csv") == slurp(out_dir / "report.csv"));

  // A sweep spec in the config is a usage error for compare.
  json sweep_cfg = small_experiment_config(tmp / "x");
  sweep_cfg["sweep"] = {{"kind", "samples"}, {"values", {0.7, 1.0}}};
  spit(tmp / "sweep_in_compare.json", sweep_cfg.dump());
  CHECK(run_cli("compare --config " + quoted(tmp / "sweep_in_compare.json")).code == 1);
}

TEST_CASE("compare reports diverged cells as failures with exit 2") {
  TempDir tmp;
  json cfg = small_experiment_config(tmp / "report");
  // Squared-error training with an absurd step size overflows; the saturating
  // classification losses would stay finite, so this cell uses regression.
  cfg["gen"]["task"] = "regression";
  cfg["gen"]["label_noise"] = 0.0;
  cfg["protocols"] = {"zero"};
  cfg["seeds"] = {1};
  cfg["train"] = {{"epochs", 2}, {"batch_size", 32}, {"sgd", true}, {"lr_model", 1e200}};
  spit(tmp / "diverge.json", cfg.dump());

  const CliResult r = run_cli("compare --config " + quoted(tmp / "diverge.json"));
  CHECK(r.code == 2);
  CHECK(r.out.find("1 failed") != std::string::npos);
  CHECK(r.err.find("failed: rnn/zero seed 1") != std::string::npos);

  // The report still lands on disk with the failure recorded.
  const json report = json::parse(slurp(tmp / "report" / "report.json"));
  REQUIRE(report.at("rows").size() == 1);
  CHECK(report.at("rows")[0].at("failed").get<bool>());
  CHECK_FALSE(report.at("rows")[0].at("error").get<std::string>().empty());
}

TEST_CASE("sweep runs the grid across values and fans rows out") {
  TempDir tmp;
  const fs::path out_dir = tmp / "report";
  json cfg = small_experiment_config(out_dir);
  cfg["sweep"] = {{"kind", "samples"}, {"values", {0.5, 1.0}}};
  spit(tmp / "sweep.json", cfg.dump());

  const CliResult r = run_cli("sweep --config " + quoted(tmp / "sweep.json"));
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("8 runs, 0 failed") != std::string::npos);

  const json report = json::parse(slurp(out_dir / "report.json"));
  CHECK(report.at("rows").size() == 8);  // 2 values x 1 backbone x 2 protocols x 2 seeds
  int low = 0, high = 0;
  for (const auto& row : report.at("rows")) {
    const double v = row.at("sweep_value").get<double>();
    if (v == 0.5) ++low;
    if (v == 1.0) ++high;
  }
  CHECK(low == 4);
  CHECK(high == 4);

  // figure_data.csv carries one aggregate line per (value, protocol, metric):
  // 2 protocols x 3 classification metrics for each of the two values.
  std::istringstream figure(slurp(out_dir / "figure_data.csv"));
  std::string line;
  int half_rows = 0, full_rows = 0;
  while (std::getline(figure, line)) {
    if (line.rfind("0.5,", 0) == 0) ++half_rows;
    if (line.rfind("1,", 0) == 0) ++full_rows;
  }
  CHECK(half_rows == 6);
  CHECK(full_rows == 6);

  // sweep without a sweep spec is a usage error.
  spit(tmp / "no_spec.json", small_experiment_config(tmp / "x").dump());
  CHECK(run_cli("sweep --config " + quoted(tmp / "no_spec.json")).code == 1);
}

TEST_CASE("gradcheck verifies analytic gradients and writes its record") {
  TempDir tmp;
  spit(tmp / "gc.json", json{{"instances", 1}, {"seed", 3}}.dump());

  const fs::path out_dir = tmp / "audit";
  const CliResult r = run_cli("gradcheck --config " + quoted(tmp / "gc.json") + " --out " +
                              quoted(out_dir));
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("all gradients verified") != std::string::npos);
  // One summary line per backbone/head/protocol combination.
  for (const char* combo : {"rnn + ", "gru + ", "attention + "})
    CHECK(r.out.find(combo) != std::string::npos);

  const json audit = json::parse(slurp(out_dir / "gradcheck.json"));
  CHECK(audit.at("all_pass").get<bool>());
  CHECK(audit.at("worst").get<double>() < 1e-4);
  CHECK(audit.at("cases").size() == 12);  // 3 backbones x 2 heads x 2 protocols, 1 instance

  // Bad knob values are config errors.
  spit(tmp / "gc_bad.json", json{{"instances", 0}}.dump());
  CHECK(run_cli("gradcheck --config " + quoted(tmp / "gc_bad.json")).code == 1);
}

TEST_CASE("report re-emits identical files from a stored report.json") {
  TempDir tmp;
  const fs::path out_dir = tmp / "report";
  spit(tmp / "cmp.json", small_experiment_config(out_dir).dump());
  REQUIRE(run_cli("compare --config " + quoted(tmp / "cmp.json")).code == 0);

  const fs::path re_dir = tmp / "re_emitted";
  const CliResult r = run_cli("report --config " + quoted(out_dir / "report.json") + " --out " +
                              quoted(re_dir));
  INFO(r.err);
  REQUIRE(r.code == 0);
  for (const char* name : {"report.json", "report.csv", "figure_data.csv"})
    CHECK_MESSAGE(slurp(out_dir / name) == slurp(re_dir / name), name);

  // Without --out the files land beside the config; prove it in a copy so
  // the originals stay pristine.
  const fs::path beside = tmp / "beside";
  fs::create_directories(beside);
  fs::copy_file(out_dir / "report.json", beside / "report.json");
  REQUIRE(run_cli("report --config " + quoted(beside / "report.json") + " --format figure-data")
              .code == 0);
  CHECK(slurp(beside / "figure_data.csv") == slurp(out_dir / "figure_data.csv"));
  CHECK_FALSE(fs::exists(beside / "report.csv"));  // format filter respected

  // Feeding the CSV where JSON is expected is a parse error.
  CHECK(run_cli("report --config " + quoted(out_dir / "report.csv")).code == 1);
}

TEST_CASE("placeholder poisoning leaves every artifact byte-identical") {
  // Under PROMPT_IMPUTE_DEBUG=1 the library stores NaN at masked cells. If
  // any code path read a masked value, NaN would bleed into predictions or
  // serialized output; identical artifacts prove none does.
  TempDir tmp;
  spit(tmp / "gen.json", small_gen_config().dump());
  spit(tmp / "run.json", small_train_config().dump());

  const fs::path plain_data = tmp / "plain_data";
  const fs::path poison_data = tmp / "poison_data";
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(plain_data))
              .code == 0);
  REQUIRE(run_cli("synthesize --config " + quoted(tmp / "gen.json") + " --out " +
                  quoted(poison_data), "PROMPT_IMPUTE_DEBUG=1")
              .code == 0);
  for (const char* name : {"data.csv", "labels.csv", "dataset.json", "manifest.json"})
    CHECK_MESSAGE(slurp(plain_data / name) == slurp(poison_data / name), name);

  const fs::path plain_run = tmp / "plain_run";
  const fs::path poison_run = tmp / "poison_run";
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(plain_run))
              .code == 0);
  REQUIRE(run_cli("train --config " + quoted(tmp / "run.json") + " --out " + quoted(poison_run),
                  "PROMPT_IMPUTE_DEBUG=1")
              .code == 0);
  for (const char* name : {"manifest.json", "history.csv", "predictions.csv", "metrics.json"})
    CHECK_MESSAGE(slurp(plain_run / name) == slurp(poison_run / name), name);
}
