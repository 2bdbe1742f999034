#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/modularity.hpp"
#include "channel_axes/pid.hpp"
#include "channel_axes/pruning.hpp"
#include "channel_axes/replaceability.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/synth.hpp"

using namespace channel_axes;

namespace {

Eigen::VectorXd normals(Eigen::Index n, std::uint64_t stream) {
  Rng rng(7, stream);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_Ksg(benchmark::State& state) {
  const auto n = state.range(0);
  const Eigen::VectorXd x = normals(n, 1);
  const Eigen::VectorXd y = 0.6 * x + 0.8 * normals(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ksg_mi(x, y, 4));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Ksg)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

void BM_LayerMetrics(benchmark::State& state) {
  SynthSpec spec;
  spec.channels = {state.range(0)};
  spec.input_dim = 32;
  spec.batch = 2000;
  spec.patches = 2000;
  spec.seed = 3;
  const auto bundle = synth_bundle(spec).bundle;
  std::map<std::string, Eigen::VectorXd> targets;
  for (const auto& [name, t] : bundle.targets) targets[name] = to_vector(t);
  MetricsConfig config;
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_layer_metrics(bundle.layers[0], targets, config));
  }
}
BENCHMARK(BM_LayerMetrics)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_LayerHulls(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(5);
  Eigen::MatrixXd f(n, 8);
  for (auto& x : f.reshaped()) x = rng.normal();
  Eigen::MatrixXd cov = f * f.transpose();
  cov.diagonal().array() += 0.5;
  const Eigen::VectorXd d = cov.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = d.asDiagonal() * cov * d.asDiagonal();
  for (auto _ : state) benchmark::DoNotOptimize(layer_hulls(corr, HullConfig{}));
}
BENCHMARK(BM_LayerHulls)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GreedyModularity(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(9);
  AxisGraph g;
  g.n = n;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.1) g.edges.push_back({i, j, rng.uniform()});
    }
  }
  g.positive_pairs = static_cast<int>(g.edges.size());
  for (auto _ : state) benchmark::DoNotOptimize(greedy_modularity(g));
}
BENCHMARK(BM_GreedyModularity)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GlobalMask(benchmark::State& state) {
  SynthSpec spec;
  spec.channels = {128, 128, 128, 128};
  spec.input_dim = 32;
  spec.batch = 200;
  spec.patches = 200;
  const auto bundle = synth_bundle(spec).bundle;
  const auto arch = architecture_of(bundle);
  const auto scores = compute_scores(bundle, nullptr, nullptr, "magnitude");
  for (auto _ : state) {
    for (double s : default_sparsity_levels()) {
      benchmark::DoNotOptimize(flops(arch, global_threshold_mask(arch, scores, s)));
    }
  }
}
BENCHMARK(BM_GlobalMask)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
