// Internal JSON (de)serialization helpers shared by checkpointing, run
// persistence, and the experiment engine. Not installed; nlohmann stays out
// of the public headers.
#pragma once

#include <string>

#include <json.hpp>

#include "promptimpute/data.hpp"
#include "promptimpute/errors.hpp"
#include "promptimpute/models.hpp"
#include "promptimpute/training.hpp"

namespace prompt_impute::detail {

inline nlohmann::json arch_to_json(const ArchConfig& cfg) {
  nlohmann::json j;
  j["backbone"] = backbone_name(cfg.backbone);
  j["layers"] = cfg.layers;
  j["hidden_dim"] = cfg.hidden_dim;
  j["head"] = head_name(cfg.head);
  j["input_dim"] = cfg.input_dim;
  return j;
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig cfg;
  cfg.backbone = parse_backbone(j.at("backbone").get<std::string>());
  cfg.layers = j.at("layers").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.head = parse_head(j.at("head").get<std::string>());
  cfg.input_dim = j.at("input_dim").get<int>();
  return cfg;
}

inline nlohmann::json norm_stats_to_json(const NormStats& stats) {
  nlohmann::json j;
  j["mean"] = stats.mean;
  j["stddev"] = stats.stddev;
  j["warnings"] = stats.warnings;
  return j;
}

inline NormStats norm_stats_from_json(const nlohmann::json& j) {
  NormStats stats;
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.stddev = j.at("stddev").get<std::vector<double>>();
  stats.warnings = j.value("warnings", std::vector<std::string>{});
  return stats;
}

inline nlohmann::json gen_config_to_json(const GenConfig& g) {
  nlohmann::json j;
  j["record_count"] = g.record_count;
  j["feature_count"] = g.feature_count;
  j["length_min"] = g.length_min;
  j["length_max"] = g.length_max;
  j["missing_rate"] = g.missing_rate;
  j["missing_mode"] = missing_mode_name(g.missing_mode);
  j["task"] = task_name(g.task);
  j["label_noise"] = g.label_noise;
  j["seed"] = g.seed;
  return j;
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
  GenConfig g;
  g.record_count = j.value("record_count", g.record_count);
  g.feature_count = j.value("feature_count", g.feature_count);
  g.length_min = j.value("length_min", g.length_min);
  g.length_max = j.value("length_max", g.length_max);
  g.missing_rate = j.value("missing_rate", g.missing_rate);
  if (j.contains("missing_mode"))
    g.missing_mode = parse_missing_mode(j.at("missing_mode").get<std::string>());
  if (j.contains("task")) g.task = parse_task(j.at("task").get<std::string>());
  g.label_noise = j.value("label_noise", g.label_noise);
  g.seed = j.value("seed", g.seed);
  return g;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr_model"] = cfg.lr_model;
  j["lr_prompt"] = cfg.lr_prompt;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["sgd"] = cfg.sgd;
  j["protocol"] = protocol_name(cfg.protocol);
  j["prompt_init"] = prompt_init_name(cfg.prompt_init);
  if (cfg.selection_metric) j["selection_metric"] = selection_metric_name(*cfg.selection_metric);
  j["seed"] = cfg.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.lr_model = j.value("lr_model", cfg.lr_model);
  cfg.lr_prompt = j.value("lr_prompt", cfg.lr_prompt);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
  cfg.sgd = j.value("sgd", cfg.sgd);
  if (j.contains("protocol")) cfg.protocol = parse_protocol(j.at("protocol").get<std::string>());
  if (j.contains("prompt_init"))
    cfg.prompt_init = parse_prompt_init(j.at("prompt_init").get<std::string>());
  if (j.contains("selection_metric"))
    cfg.selection_metric = parse_selection_metric(j.at("selection_metric").get<std::string>());
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

}  // namespace prompt_impute::detail
