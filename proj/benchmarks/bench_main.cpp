#include <benchmark/benchmark.h>

#include <random>

#include "lcpvae/autodiff.hpp"
#include "lcpvae/data.hpp"
#include "lcpvae/distributions.hpp"
#include "lcpvae/eval.hpp"
#include "lcpvae/training.hpp"

namespace {

using namespace lcpvae;

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  return standard_normal(r, c, rng);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(0);
  const Var a = Var::constant(random_matrix(n, n, rng)), b = Var::constant(random_matrix(n, n, rng));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b).value().data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_TrainingStep(benchmark::State& state) {
  SynthSpec spec;
  spec.n_per_condition = 50;
  const Dataset dataset = generate(spec);
  RunConfig config;
  config.model = static_cast<ModelKind>(state.range(0));
  config.seed = 0;
  const Model model = build_model(config, dataset);
  std::vector<std::size_t> idx(dataset.split(Split::train).begin(), dataset.split(Split::train).begin() + 32);
  const Batch batch = make_batch(dataset, idx, model.condition_table());
  std::mt19937_64 rng(1);
  const BatchNoise noise = draw_noise(batch.size(), config.latent_dim, rng);
  for (auto _ : state) {
    const ModelOutput out = model.forward(batch, noise.primary, noise.conditional);
    const LossGraph loss = model_loss(model, out, batch, 1.0);
    backward(loss.total);
    benchmark::DoNotOptimize(loss.total.value().item());
  }
  state.SetLabel(to_string(config.model));
}
BENCHMARK(BM_TrainingStep)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_Silhouette(benchmark::State& state) {
  const auto per = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> points;
  std::vector<int> labels;
  for (int k = 0; k < 4; ++k) {
    for (std::size_t i = 0; i < per; ++i) {
      points.push_back({3.0 * k + normal(rng), normal(rng)});
      labels.push_back(k);
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(silhouette(points, labels));
}
BENCHMARK(BM_Silhouette)->Arg(25)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
