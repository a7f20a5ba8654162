#include <benchmark/benchmark.h>

#include "trajtok/align.hpp"
#include "trajtok/motion.hpp"
#include "trajtok/net.hpp"
#include "trajtok/rng.hpp"

using namespace trajtok;

namespace {

TrajectorySet make_trajectories(std::size_t m, std::size_t frames) {
  Rng rng(mix_seed(0xB123, m));
  TrajectorySet ts;
  ts.points = Tensor({m, frames, 2});
  ts.visibility = Tensor::full({m, frames}, 1.0f);
  for (std::size_t i = 0; i < m; ++i) {
    double x = rng.uniform(0.3, 0.7), y = rng.uniform(0.3, 0.7);
    for (std::size_t t = 0; t < frames; ++t) {
      ts.points(i, t, 0) = static_cast<float>(x);
      ts.points(i, t, 1) = static_cast<float>(y);
      x = std::clamp(x + rng.uniform(-0.004, 0.004), 0.0, 1.0);
      y = std::clamp(y + rng.uniform(-0.004, 0.004), 0.0, 1.0);
    }
  }
  return ts;
}

constexpr std::size_t kFrames = 64;

}  // namespace

static void BM_HodDescriptor(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  TrajectorySet ts = make_trajectories(m, kFrames);
  const HodConfig cfg{32, 1};
  for (auto _ : state) {
    Tensor out = hod_descriptor(ts, cfg);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_HodDescriptor)->RangeMultiplier(2)->Range(32, 512)->Complexity();

static void BM_InterDescriptor(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  TrajectorySet ts = make_trajectories(m, kFrames);
  for (auto _ : state) {
    Tensor out = inter_descriptor(ts);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_InterDescriptor)->RangeMultiplier(2)->Range(32, 256)->Complexity();

static void BM_AlignSample(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  TrajectorySet ts = make_trajectories(m, kFrames);
  Rng rng(5);
  FeatureVolume fv;
  fv.features = Tensor({16, 16, kFrames, 32});
  for (std::size_t i = 0; i < fv.features.size(); ++i)
    fv.features[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto _ : state) {
    Tensor out = sample_trajectory_tokens(fv, ts);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AlignSample)->RangeMultiplier(2)->Range(32, 512)->Complexity();

static void BM_AttentionForward(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  NetConfig cfg;
  cfg.model_dim = 64;
  cfg.heads = 4;
  Rng prng(7);
  NetParams params = init_net_params<float>(cfg, kFrames, 4, prng);
  Rng rng(9);
  Tensor tokens({m, kFrames, 64});
  for (std::size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
  for (auto _ : state) {
    auto out = net_forward(tokens, params, cfg);
    benchmark::DoNotOptimize(out.logits.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_AttentionForward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

BENCHMARK_MAIN();
