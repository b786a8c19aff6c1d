#include "promptimpute/prompt.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "promptimpute/errors.hpp"
#include "promptimpute/rng.hpp"

namespace prompt_impute {

const char* prompt_init_name(PromptInit p) {
  switch (p) {
    case PromptInit::zeros: return "zeros";
    case PromptInit::uniform: return "uniform";
    case PromptInit::feature_means: return "feature-means";
  }
  return "?";
}

PromptInit parse_prompt_init(const std::string& name) {
  if (name == "zeros") return PromptInit::zeros;
  if (name == "uniform") return PromptInit::uniform;
  if (name == "feature-means") return PromptInit::feature_means;
  throw InvalidInput("unknown prompt initialization '" + name + "'");
}

FeaturePrompt init_prompt(PromptInit strategy, int feature_count, const NormStats* stats,
                          std::uint64_t seed) {
  if (feature_count < 1) throw std::invalid_argument("init_prompt: feature_count must be >= 1");
  std::vector<double> v(static_cast<std::size_t>(feature_count), 0.0);
  switch (strategy) {
    case PromptInit::zeros:
      break;
    case PromptInit::uniform: {
      Rng rng(seed);
      for (auto& x : v) {
        double u = rng.uniform();
        while (u == 0.0) u = rng.uniform();  // keep the interval open
        x = -0.1 + 0.2 * u;
      }
      break;
    }
    case PromptInit::feature_means: {
      if (stats == nullptr)
        throw std::invalid_argument("init_prompt: feature-means initialization requires stats");
      if (static_cast<int>(stats->mean.size()) != feature_count)
        throw std::invalid_argument("init_prompt: stats dimensionality mismatch");
      v = stats->mean;
      break;
    }
  }
  FeaturePrompt prompt;
  prompt.v = tensor_create({feature_count}, std::move(v), /*requires_grad=*/true);
  prompt.init_strategy = strategy;
  return prompt;
}

Tensor fill_prompt(Tape& tape, const Tensor& x, const Tensor& mask, const FeaturePrompt& prompt) {
  if (prompt.v == nullptr) throw StateError("fill_prompt: prompt is not initialized");
  return tape.masked_fill(x, mask, prompt.v);
}

void freeze(FeaturePrompt& prompt) {
  if (prompt.v == nullptr) throw StateError("freeze: prompt is not initialized");
  prompt.v->requires_grad = false;
  prompt.v->grad.clear();
}

void save_prompt_json(const FeaturePrompt& prompt, const std::string& path) {
  if (prompt.v == nullptr) throw StateError("save_prompt_json: prompt is not initialized");
  nlohmann::json j;
  j["feature_count"] = prompt.v->shape[0];
  j["init"] = prompt_init_name(prompt.init_strategy);
  j["frozen"] = prompt.frozen();
  j["values"] = prompt.v->data;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write prompt file '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw IoError("failed while writing '" + path + "'");
}

FeaturePrompt load_prompt_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid prompt JSON: ") + e.what());
  }
  try {
    const int n = j.at("feature_count").get<int>();
    auto values = j.at("values").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != n)
      throw InvalidInput("prompt JSON: value count does not match feature_count");
    FeaturePrompt prompt;
    prompt.init_strategy = parse_prompt_init(j.at("init").get<std::string>());
    prompt.v = tensor_create({n}, std::move(values), !j.at("frozen").get<bool>());
    return prompt;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("prompt JSON violates the schema: ") + e.what());
  }
}

}  // namespace prompt_impute
