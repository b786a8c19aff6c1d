#pragma once

#include <cstdint>
#include <string>

#include "promptimpute/data.hpp"
#include "promptimpute/tensor.hpp"

namespace prompt_impute {

enum class PromptInit { zeros, uniform, feature_means };

const char* prompt_init_name(PromptInit p);
PromptInit parse_prompt_init(const std::string& name);

// The learnable per-feature fill vector: one scalar per feature, broadcast
// across time steps at masked positions. Trained by the downstream loss with
// its own learning rate; frozen (made immutable) for inference.
struct FeaturePrompt {
  Tensor v;  // shape [feature_count]
  PromptInit init_strategy = PromptInit::zeros;

  bool frozen() const { return v != nullptr && !v->requires_grad; }
};

// zeros -> all 0; uniform -> i.i.d. U(-0.1,0.1) from seed; feature_means ->
// the per-feature observed means carried by stats (requires stats).
FeaturePrompt init_prompt(PromptInit strategy, int feature_count, const NormStats* stats,
                          std::uint64_t seed);

// X'[l,n] = X[l,n] where observed, v[n] where missing. Differentiable:
// gradient reaches v[n] as the sum over that feature's masked positions and
// never flows into the masked-out X entries.
Tensor fill_prompt(Tape& tape, const Tensor& x, const Tensor& mask, const FeaturePrompt& prompt);

// Makes the prompt immutable: no training step touches it afterwards.
// Idempotent.
void freeze(FeaturePrompt& prompt);

void save_prompt_json(const FeaturePrompt& prompt, const std::string& path);
FeaturePrompt load_prompt_json(const std::string& path);

}  // namespace prompt_impute
