#include <benchmark/benchmark.h>

#include "graphbert/model.hpp"
#include "graphbert/preprocess.hpp"
#include "graphbert/synthetic.hpp"
#include "graphbert/tensor.hpp"

using namespace graphbert;

namespace {

Graph bench_graph() {
  SbmConfig cfg;
  cfg.classes = 4;
  cfg.nodes_per_class = 50;
  cfg.feature_dim = 200;
  cfg.seed = 11;
  return make_sbm(cfg);
}

void BM_MatmulDense(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  Rng rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> a(n * n), b(n * n);
  for (auto& x : a) x = u(rng);
  for (auto& x : b) x = u(rng);
  Tensor<float> ta = Tensor<float>::from({n, n}, a);
  Tensor<float> tb = Tensor<float>::from({n, n}, b);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(ta, tb).data().data());
  state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(n * n * n));
}
BENCHMARK(BM_MatmulDense)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulSparseLhs(benchmark::State& state) {
  // 5%-dense 0/1 left operand: the zero-skip path used by raw-feature rows.
  std::size_t m = 512, k = 1024, n = 32;
  Rng rng(2);
  std::bernoulli_distribution bit(0.05);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> a(m * k), b(k * n);
  for (auto& x : a) x = bit(rng) ? 1.0f : 0.0f;
  for (auto& x : b) x = u(rng);
  Tensor<float> ta = Tensor<float>::from({m, k}, a);
  Tensor<float> tb = Tensor<float>::from({k, n}, b);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(ta, tb).data().data());
}
BENCHMARK(BM_MatmulSparseLhs);

void BM_IntimacyPower(benchmark::State& state) {
  Graph g = bench_graph();
  SparseColMatrix abar = normalized_adjacency(g);
  for (auto _ : state)
    benchmark::DoNotOptimize(intimacy_power(abar, 0.15, 1e-8, 10000).S.data());
}
BENCHMARK(BM_IntimacyPower);

void BM_BuildCache(benchmark::State& state) {
  Graph g = bench_graph();
  for (auto _ : state) benchmark::DoNotOptimize(build_cache(g, 5, 0.15).contexts.data());
}
BENCHMARK(BM_BuildCache);

void BM_EncodeForward(benchmark::State& state) {
  Graph g = bench_graph();
  ContextCache cache = build_cache(g, 5, 0.15);
  ModelConfig cfg;
  cfg.feature_dim = g.feature_dim;
  cfg.num_classes = g.num_classes;
  cfg.k = cache.k;
  Rng rng(3);
  Model<float> model = Model<float>::init(cfg, rng);
  std::vector<std::uint32_t> nodes(g.node_count);
  for (std::uint32_t i = 0; i < g.node_count; ++i) nodes[i] = i;
  BatchInputs<float> batch = make_batch<float>(g, cache, cfg, nodes);
  NoGradGuard ng;
  for (auto _ : state) {
    auto enc = encode(model, batch, false, rng);
    benchmark::DoNotOptimize(enc.Z.data().data());
  }
}
BENCHMARK(BM_EncodeForward);

}  // namespace

BENCHMARK_MAIN();
