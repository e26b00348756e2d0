#include <benchmark/benchmark.h>

#include "latentmark/augment.hpp"
#include "latentmark/features.hpp"
#include "latentmark/perceptual.hpp"
#include "latentmark/rng.hpp"
#include "latentmark/stats.hpp"
#include "latentmark/synthetic.hpp"
#include "latentmark/watermark.hpp"

using namespace latentmark;

namespace {

const FeatureModel& desk_model() {
  static const FeatureModel model = [] {
    Extractor ex = build_extractor(ExtractorSpec::desk(), 1);
    std::vector<RawFeature> raw;
    for (int i = 0; i < 200; ++i) raw.push_back(ex.forward(synthetic_image(100000 + i, 64, 64)));
    WhiteningTransform w = fit_whitening(raw, 64);
    return FeatureModel(std::move(ex), std::move(w));
  }();
  return model;
}

}  // namespace

static void BM_ExtractorForward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Extractor ex = build_extractor(ExtractorSpec::desk(), 1);
  const Image img = synthetic_image(1, side, side);
  for (auto _ : state) benchmark::DoNotOptimize(ex.forward(img));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExtractorForward)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_ExtractorForwardBackward(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Extractor ex = build_extractor(ExtractorSpec::desk(), 1);
  const Image img = synthetic_image(2, side, side);
  std::vector<double> cot(ex.output_dim(), 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(ex.input_gradient(img, cot));
}
BENCHMARK(BM_ExtractorForwardBackward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_SsimHeatmap(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Image a = synthetic_image(3, side, side), b = synthetic_image(4, side, side);
  for (auto _ : state) benchmark::DoNotOptimize(ssim_heatmap(a, b));
}
BENCHMARK(BM_SsimHeatmap)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_RegIncBeta(benchmark::State& state) {
  const double a = (static_cast<double>(state.range(0)) - 1) / 2;
  CounterRng rng(5);
  std::vector<double> xs(256);
  for (auto& x : xs) x = rng.uniform();
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(reg_inc_beta(xs[i++ % xs.size()], a, 0.5));
}
BENCHMARK(BM_RegIncBeta)->Arg(64)->Arg(2048);

static void BM_AngleOfFpr(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(angle_of_fpr(1e-6, 64));
}
BENCHMARK(BM_AngleOfFpr);

// One projected Adam step of the zero-bit embedding, augmentation included.
static void BM_EmbedIteration(benchmark::State& state) {
  const FeatureModel& model = desk_model();
  const Image img = synthetic_image(6, 128, 128);
  const Key key = gen_zero_bit_key(7, 64);
  EmbedConfig cfg = EmbedConfig::zero_bit(1e-6);
  cfg.iterations = 1;
  for (auto _ : state) benchmark::DoNotOptimize(embed(model, img, key, cfg));
}
BENCHMARK(BM_EmbedIteration)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
