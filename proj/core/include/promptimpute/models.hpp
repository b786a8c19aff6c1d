#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "promptimpute/prompt.hpp"
#include "promptimpute/tensor.hpp"

namespace prompt_impute {

enum class BackboneKind { rnn, gru, attention };
enum class HeadKind { linear_classifier, mlp_regressor };

const char* backbone_name(BackboneKind b);
BackboneKind parse_backbone(const std::string& name);
const char* head_name(HeadKind h);
HeadKind parse_head(const std::string& name);

struct ArchConfig {
  BackboneKind backbone = BackboneKind::gru;
  int layers = 1;
  int hidden_dim = 32;
  HeadKind head = HeadKind::linear_classifier;
  int input_dim = 0;
};

void validate_arch(const ArchConfig& cfg);

// Named parameter tensors in a fixed order; the order defines both the
// initialization draw sequence and the optimizer traversal, so runs are
// reproducible. All tensors require gradients.
struct ModelParams {
  std::vector<std::pair<std::string, Tensor>> named;

  const Tensor& find(const std::string& name) const;
  long long parameter_count() const;
};

// Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)) drawn in name order from one
// stream; biases zero.
ModelParams init_model(const ArchConfig& cfg, std::uint64_t seed);

// Encodes rows [0, length) of x into a d-dimensional embedding (shape [1,d]).
// Recurrent backbones return the hidden state at the true last step;
// attention applies sinusoidal positions, single-head self-attention blocks
// with feed-forward sublayers and residuals, then mean-pools. Rows at and
// beyond `length` are never read.
Tensor backbone_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                        const Tensor& x, int length);

// Decodes the embedding: linear logit for classification, d->d->1 relu MLP
// for regression. Returns a [1,1] tensor (a logit for classification).
Tensor head_forward(Tape& tape, const ArchConfig& cfg, const ModelParams& params,
                    const Tensor& e);

// Maps the head output to the reported score: a probability strictly inside
// (0,1) for classification, the raw value for regression.
double prediction_score(const ArchConfig& cfg, double head_output);

struct ParamCount {
  long long model_count = 0;
  long long prompt_count = 0;
  double ratio = 0.0;
};

ParamCount count_parameters(const ModelParams& params, const FeaturePrompt* prompt);

// Checkpoint directory: manifest.json (arch, seed, tensor table) plus one
// little-endian float64 blob per named tensor.
void save_checkpoint(const ArchConfig& cfg, const ModelParams& params, std::uint64_t seed,
                     const std::string& dir);

struct Checkpoint {
  ArchConfig arch;
  std::uint64_t seed = 0;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace prompt_impute
