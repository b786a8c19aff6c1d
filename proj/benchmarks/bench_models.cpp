// Benchmarks a full model step at the shapes the experiments actually use:
// prompt fill, backbone encode, head decode, and the same with a backward
// pass. One record of length 30 with 8 features.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "promptimpute/models.hpp"
#include "promptimpute/prompt.hpp"
#include "promptimpute/rng.hpp"
#include "promptimpute/tensor.hpp"

using namespace prompt_impute;

namespace {

constexpr int kLength = 30;
constexpr int kFeatures = 8;

struct Instance {
  ArchConfig arch;
  ModelParams params;
  FeaturePrompt prompt;
  Tensor x;
  Tensor mask;
};

Instance make_instance(BackboneKind backbone) {
  Instance inst;
  inst.arch.backbone = backbone;
  inst.arch.layers = 1;
  inst.arch.hidden_dim = 16;
  inst.arch.head = HeadKind::linear_classifier;
  inst.arch.input_dim = kFeatures;
  inst.params = init_model(inst.arch, 7);
  inst.prompt = init_prompt(PromptInit::uniform, kFeatures, nullptr, 11);

  Rng rng(13);
  std::vector<double> values(kLength * kFeatures);
  std::vector<double> mask_values(kLength * kFeatures);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool observed = rng.uniform() >= 0.6;
    mask_values[i] = observed ? 1.0 : 0.0;
    values[i] = observed ? rng.normal() : 0.0;
  }
  inst.x = tensor_create({kLength, kFeatures}, std::move(values));
  inst.mask = tensor_create({kLength, kFeatures}, std::move(mask_values));
  return inst;
}

BackboneKind backbone_arg(const benchmark::State& state) {
  switch (state.range(0)) {
    case 0: return BackboneKind::rnn;
    case 1: return BackboneKind::gru;
    default: return BackboneKind::attention;
  }
}

void set_backbone_label(benchmark::State& state) {
  state.SetLabel(backbone_name(backbone_arg(state)));
}

void bm_forward(benchmark::State& state) {
  Instance inst = make_instance(backbone_arg(state));
  set_backbone_label(state);
  for (auto _ : state) {
    Tape tape;
    Tensor filled = fill_prompt(tape, inst.x, inst.mask, inst.prompt);
    Tensor e = backbone_forward(tape, inst.arch, inst.params, filled, kLength);
    Tensor z = head_forward(tape, inst.arch, inst.params, e);
    benchmark::DoNotOptimize(prediction_score(inst.arch, z->data[0]));
  }
}

void bm_forward_backward(benchmark::State& state) {
  Instance inst = make_instance(backbone_arg(state));
  set_backbone_label(state);
  const std::vector<double> target{1.0};
  for (auto _ : state) {
    Tape tape;
    Tensor filled = fill_prompt(tape, inst.x, inst.mask, inst.prompt);
    Tensor e = backbone_forward(tape, inst.arch, inst.params, filled, kLength);
    Tensor z = head_forward(tape, inst.arch, inst.params, e);
    Tensor loss = tape.bce_with_logits_mean(z, target);
    tape.backward(loss);
    benchmark::DoNotOptimize(inst.prompt.v->grad.data());
    for (auto& [name, t] : inst.params.named) t->grad.clear();
    inst.prompt.v->grad.clear();
  }
}

void bm_init_model(benchmark::State& state) {
  ArchConfig arch;
  arch.backbone = backbone_arg(state);
  arch.layers = 1;
  arch.hidden_dim = 16;
  arch.input_dim = kFeatures;
  set_backbone_label(state);
  std::uint64_t seed = 1;
  for (auto _ : state) {
    ModelParams params = init_model(arch, seed++);
    benchmark::DoNotOptimize(params.named.data());
  }
}

}  // namespace

BENCHMARK(bm_forward)->Arg(0)->Arg(1)->Arg(2);
BENCHMARK(bm_forward_backward)->Arg(0)->Arg(1)->Arg(2);
BENCHMARK(bm_init_model)->Arg(0)->Arg(1)->Arg(2);
