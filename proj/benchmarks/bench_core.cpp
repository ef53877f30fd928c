#include <benchmark/benchmark.h>

#include <random>

#include "rchat/corpus.hpp"
#include "rchat/embedding_index.hpp"
#include "rchat/leiden.hpp"

using namespace rchat;

namespace {

EmbeddingIndex random_index(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<IndexedItem> items;
  items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = g(rng);
    items.push_back({"item" + std::to_string(i), "", std::move(v), 0.0});
  }
  return EmbeddingIndex(std::move(items));
}

// Planted communities of 20 nodes, dense inside and sparse across.
WeightedGraph planted(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WeightedGraph g(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double p = a / 20 == b / 20 ? 0.3 : 0.002;
      if (u(rng) < p) g.add_edge(a, b, 1.0);
    }
  }
  return g;
}

}  // namespace

static void BM_TopK(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto index = random_index(static_cast<std::size_t>(state.range(0)), 64, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> q(64);
  for (auto& x : q) x = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k(q, 5, 0.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000)->Arg(100000);

static void BM_Modularity(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = planted(n, rng);
  Partition p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i / 20;
  for (auto _ : state) benchmark::DoNotOptimize(modularity(g, p, 1.0));
}
BENCHMARK(BM_Modularity)->Arg(200)->Arg(2000);

static void BM_Leiden(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const auto g = planted(static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(leiden(g, 1.0, 42, 4));
}
BENCHMARK(BM_Leiden)->Arg(200)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_Chunker(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < 20000; ++i) text += i % 11 == 0 ? "é " : "lorem ";
  const SourceDocument doc{"bench.md", DocumentKind::documentation, text, text.size()};
  for (auto _ : state) benchmark::DoNotOptimize(chunk_document(doc, 1200, 100));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_Chunker);
BENCHMARK_MAIN();
