#include <benchmark/benchmark.h>

#include "featinv/losses.hpp"
#include "featinv/priors.hpp"
#include "featinv/rng.hpp"
#include "featinv/splitnet.hpp"
#include "featinv/whitebox.hpp"

using namespace featinv;

namespace {

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  Tensor t(s);
  Rng rng(seed);
  rng.fill_normal(t, 0.0, 1.0);
  return t;
}

void BM_TvLoss(benchmark::State& state) {
  const Tensor img = random_tensor({3, 32, 32}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(losses::tv_loss(img));
}
BENCHMARK(BM_TvLoss);

void BM_TvLossGrad(benchmark::State& state) {
  const Tensor img = random_tensor({3, 32, 32}, 1);
  for (auto _ : state) benchmark::DoNotOptimize(losses::tv_loss_grad(img));
}
BENCHMARK(BM_TvLossGrad);

void BM_NegentropyLoss(benchmark::State& state) {
  const Tensor v = random_tensor({4, 8, 8}, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(losses::negentropy_loss(v, 1.0));
}
BENCHMARK(BM_NegentropyLoss);

void BM_NormalizeLatent(benchmark::State& state) {
  const Tensor v = random_tensor({4, 64, 64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(priors::normalize(v));
}
BENCHMARK(BM_NormalizeLatent);

void BM_ToyCnnF1Forward(benchmark::State& state) {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, state.range(0));
  const Tensor x = random_tensor({3, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(sm.f1(x));
}
BENCHMARK(BM_ToyCnnF1Forward)->Arg(1)->Arg(2)->Arg(3);

void BM_ToyDecoderDecode(benchmark::State& state) {
  auto prior = priors::ToyDecoderPrior::make_untrained(5);
  const Tensor v = priors::normalize(random_tensor({4, 8, 8}, 6));
  for (auto _ : state)
    benchmark::DoNotOptimize(prior.decode(v, priors::TextEmbedding{}));
}
BENCHMARK(BM_ToyDecoderDecode);

void BM_WhiteboxIteration(benchmark::State& state) {
  auto model = splitnet::make_toy_cnn();
  const auto sm = splitnet::split(model, 2);
  priors::IdentityPrior prior({3, 32, 32});
  const Tensor x = random_tensor({3, 32, 32}, 7);
  splitnet::FeatureTensor z{sm.f1(x), 2};
  whitebox::InversionConfig cfg;
  cfg.iterations = static_cast<int>(state.range(0));
  cfg.seed = 8;
  for (auto _ : state)
    benchmark::DoNotOptimize(whitebox::invert(sm, z, prior, cfg));
}
BENCHMARK(BM_WhiteboxIteration)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
