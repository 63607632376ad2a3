#include <benchmark/benchmark.h>

#include "affalign/common/rng.hpp"
#include "affalign/numerics/ops.hpp"
#include "affalign/numerics/tape.hpp"

using namespace affalign;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng = substream(seed, "bench");
  for (double& v : t.data()) v = 0.3 * standard_normal(rng);
  return t;
}

// Rows of one desk batch: 16 samples x 265 context tokens.
constexpr std::size_t kRows = 16 * 265;

void BM_Linear(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({kRows, width}, 1), w = random_tensor({width, width}, 2);
  for (auto _ : state) {
    Tape tape;
    const Var y = linear(tape.input(x), tape.input(w));
    benchmark::DoNotOptimize(tape.backward(sum(y)));
  }
}
BENCHMARK(BM_Linear)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Gelu(benchmark::State& state) {
  const Tensor x = random_tensor({kRows, 128}, 3);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.backward(sum(gelu(tape.input(x)))));
  }
}
BENCHMARK(BM_Gelu)->Unit(benchmark::kMillisecond);

void BM_LayerNorm(benchmark::State& state) {
  const Tensor x = random_tensor({kRows, 64}, 4);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.backward(sum(layer_norm(tape.input(x)))));
  }
}
BENCHMARK(BM_LayerNorm)->Unit(benchmark::kMillisecond);

void BM_Attention(benchmark::State& state) {
  const bool train = state.range(0) != 0;
  const Tensor q = random_tensor({kRows, 64}, 5), k = random_tensor({kRows, 64}, 6),
               v = random_tensor({kRows, 64}, 7);
  for (auto _ : state) {
    Tape tape(train ? Tape::Mode::kTrain : Tape::Mode::kInference);
    const Var out = attention(tape.input(q), tape.input(k), tape.input(v), 4, nullptr, 16);
    if (train) {
      benchmark::DoNotOptimize(tape.backward(sum(out)));
    } else {
      benchmark::DoNotOptimize(out.value().ptr());
    }
  }
  state.SetLabel(train ? "forward+backward" : "forward");
}
BENCHMARK(BM_Attention)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
