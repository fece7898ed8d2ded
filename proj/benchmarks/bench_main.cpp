#include <benchmark/benchmark.h>

#include "dascl/augment.hpp"
#include "dascl/losses.hpp"
#include "dascl/model.hpp"
#include "dascl/probe.hpp"

namespace {

using namespace dascl;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = Tensor::randn({n, n}, 1), b = Tensor::randn({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

// Forward and backward of the two-view training objective on one batch.
void BM_TrainStep(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const ModelBundle model = init_model(ModelConfig{}, 3);
  const Tensor x = Tensor::randn({2 * b, 256}, 4);
  std::vector<int> labels(2 * b);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 5);
  for (auto _ : state) {
    Tape tape;
    const ModelGraph g(tape, model);
    const Var h = g.features(tape.constant(x));
    const Var loss = combined_loss(g.logits(h), g.projection(h), labels, SupConConfig{});
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64);

void BM_SupCon(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 5);
  const Tensor raw = Tensor::randn({n, 32}, 5);
  for (auto _ : state) {
    Tape tape;
    const Var z = tape.parameter(raw);
    benchmark::DoNotOptimize(tape.backward(supcon_loss(l2_normalize_rows(z), labels, 0.1)));
  }
}
BENCHMARK(BM_SupCon)->Arg(64)->Arg(128)->Arg(256);

void BM_AugmentOp(benchmark::State& state) {
  const auto kind = static_cast<AugmentKind>(state.range(0));
  Rng rng(6);
  Image img{16, 16, std::vector<double>(256)};
  for (double& p : img.pixels) p = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(apply_op(img, kind, 0.7, rng));
  state.SetLabel(to_string(kind));
}
BENCHMARK(BM_AugmentOp)->DenseRange(0, static_cast<int>(AugmentKind::VFlip));

void BM_ProxyDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = Tensor::randn({n, 64}, 7), b = Tensor::randn({n, 64}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(proxy_a_distance(a, b, 9));
}
BENCHMARK(BM_ProxyDistance)->Arg(200)->Arg(800);

}  // namespace

BENCHMARK_MAIN();
