#include <benchmark/benchmark.h>

#include "geovit/backbone.hpp"
#include "geovit/trainer.hpp"

namespace {

using namespace geovit;

Tensor<float> random_tensor(Rng& rng, const Shape& shape) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return Tensor<float>(shape, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto a = random_tensor(rng, {n, n}), b = random_tensor(rng, {n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_SelfAttention(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  ParamStore<float> store;
  nn::MultiHeadAttention<float> attn(store, "a", 128, 4);
  nn::init_params(store, 2);
  Rng rng(2);
  auto x = random_tensor(rng, {8, tokens, 128});
  for (auto _ : state) benchmark::DoNotOptimize(attn.self_attention(x).data().data());
}
BENCHMARK(BM_SelfAttention)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Co2Forward(benchmark::State& state) {
  Co2Model<float> model(ModelConfig{});
  nn::init_params(model.params(), 3);
  Rng rng(3);
  auto images = random_tensor(rng, {8, 12, 64, 64});
  auto weather = random_tensor(rng, {8, 3});
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(images, weather).power.data().data());
}
BENCHMARK(BM_Co2Forward)->Unit(benchmark::kMillisecond);

void BM_Co2TrainStep(benchmark::State& state) {
  const ModelConfig mc;
  auto ds = data::synthesize(Variant::kCo2, 10, 4, data::GeneratorConfig::for_model(mc));
  Co2Model<float> model(mc);
  nn::init_params(model.params(), 4);
  train::TrainConfig tc;
  tc.eval_every = 1 << 30;
  tc.log_every = 1 << 30;
  for (auto _ : state) {
    tc.steps = model.params().step_count() + 1;
    train::train_loop(model, ds, tc);
  }
}
BENCHMARK(BM_Co2TrainStep)->Unit(benchmark::kMillisecond);

void BM_No2TrainStep(benchmark::State& state) {
  ModelConfig mc;
  mc.variant = Variant::kNo2;
  auto ds = data::synthesize(Variant::kNo2, 10, 5, data::GeneratorConfig::for_model(mc));
  No2Model<float> model(mc);
  nn::init_params(model.params(), 5);
  train::TrainConfig tc;
  tc.eval_every = 1 << 30;
  tc.log_every = 1 << 30;
  for (auto _ : state) {
    tc.steps = model.params().step_count() + 1;
    train::train_loop(model, ds, tc);
  }
}
BENCHMARK(BM_No2TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
