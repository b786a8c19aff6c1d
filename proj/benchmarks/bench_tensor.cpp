// Micro-benchmarks for the autodiff core: raw matmul throughput, the cost of
// recording and replaying a tape, and the masked-fill op that sits on the
// training hot path.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "promptimpute/rng.hpp"
#include "promptimpute/tensor.hpp"

using namespace prompt_impute;

namespace {

Tensor random_matrix(int rows, int cols, std::uint64_t seed, bool requires_grad) {
  Rng rng(seed);
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (auto& v : values) v = rng.normal();
  return tensor_create({rows, cols}, std::move(values), requires_grad);
}

void bm_matmul_forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_matrix(n, n, 1, false);
  const Tensor b = random_matrix(n, n, 2, false);
  Tape tape;
  for (auto _ : state) {
    Tensor c = tape.matmul(a, b);
    benchmark::DoNotOptimize(c->data.data());
    tape.reset();
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void bm_matmul_backward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_matrix(n, n, 1, true);
  const Tensor b = random_matrix(n, n, 2, true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = tape.sum(tape.matmul(a, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a->grad.data());
    a->grad.clear();
    b->grad.clear();
  }
}

// A recurrent-step-shaped chain: x.W + h.U + b through tanh, repeated, then
// reduced. Measures tape overhead on many small ops rather than flop rate.
void bm_chain_backward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  const int d = 16;
  const Tensor w = random_matrix(d, d, 3, true);
  const Tensor u = random_matrix(d, d, 4, true);
  const Tensor b = random_matrix(1, d, 5, true);
  const Tensor x = random_matrix(1, d, 6, false);
  for (auto _ : state) {
    Tape tape;
    Tensor h = tensor_zeros({1, d});
    for (int t = 0; t < steps; ++t)
      h = tape.tanh(tape.add(tape.add(tape.matmul(x, w), tape.matmul(h, u)), b));
    Tensor loss = tape.sum(h);
    tape.backward(loss);
    benchmark::DoNotOptimize(w->grad.data());
    w->grad.clear();
    u->grad.clear();
    b->grad.clear();
  }
  state.SetItemsProcessed(state.iterations() * steps);
}

void bm_masked_fill_backward(benchmark::State& state) {
  const int rows = static_cast<int>(state.range(0));
  const int cols = 8;
  const Tensor x = random_matrix(rows, cols, 7, false);
  Rng rng(8);
  std::vector<double> mask_values(static_cast<std::size_t>(rows) * cols);
  for (auto& m : mask_values) m = rng.uniform() < 0.6 ? 0.0 : 1.0;
  const Tensor mask = tensor_create({rows, cols}, std::move(mask_values));
  Rng fill_rng(9);
  std::vector<double> fill_values(cols);
  for (auto& v : fill_values) v = fill_rng.normal();
  const Tensor fill = tensor_create({cols}, std::move(fill_values), true);
  for (auto _ : state) {
    Tape tape;
    Tensor filled = tape.masked_fill(x, mask, fill);
    Tensor loss = tape.sum(filled);
    tape.backward(loss);
    benchmark::DoNotOptimize(fill->grad.data());
    fill->grad.clear();
  }
  state.SetItemsProcessed(state.iterations() * rows * cols);
}

}  // namespace

BENCHMARK(bm_matmul_forward)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(bm_matmul_backward)->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(bm_chain_backward)->Arg(10)->Arg(30);
BENCHMARK(bm_masked_fill_backward)->Arg(10)->Arg(30);
