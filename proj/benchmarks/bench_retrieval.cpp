#include <benchmark/benchmark.h>

#include <cmath>
#include <numeric>
#include <random>

#include "charlink/retrieval.hpp"

using namespace charlink;

namespace {

std::vector<float> unit_rows(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss;
  std::vector<float> rows(n * dim);
  for (std::size_t r = 0; r < n; ++r) {
    float* row = rows.data() + r * dim;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = gauss(rng);
      sq += static_cast<double>(row[j]) * row[j];
    }
    const auto inv = static_cast<float>(1.0 / std::sqrt(sq));
    for (std::size_t j = 0; j < dim; ++j) row[j] *= inv;
  }
  return rows;
}

EmbeddingIndex random_index(std::size_t n, std::size_t dim) {
  const auto rows = unit_rows(n, dim, 1);
  std::vector<EntityOrdinal> row_entity(n);
  std::iota(row_entity.begin(), row_entity.end(), EntityOrdinal{0});
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "E" + std::to_string(i);
  return EmbeddingIndex::from_rows(dim, rows, std::move(row_entity), std::move(ids));
}

// args: rows, dim
void BM_SearchSingle(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::size_t>(state.range(1));
  const auto index = random_index(n, dim);
  const auto query = unit_rows(1, dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(index.search(query, 30));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
  state.counters["rows"] = static_cast<double>(n);
}
BENCHMARK(BM_SearchSingle)->Args({100'000, 300})->Args({1'000'000, 300})->Unit(benchmark::kMillisecond);

// args: rows, queries
void BM_SearchBatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto nq = static_cast<std::size_t>(state.range(1));
  const auto index = random_index(n, 300);
  const auto queries = unit_rows(nq, 300, 3);
  for (auto _ : state) benchmark::DoNotOptimize(index.search_batch(queries, 30));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(nq));
}
BENCHMARK(BM_SearchBatch)->Args({100'000, 16})->Args({100'000, 256})->Unit(benchmark::kMillisecond);

// args: rows, workers
void BM_SearchWorkers(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto workers = static_cast<unsigned>(state.range(1));
  const auto index = random_index(n, 300);
  const auto query = unit_rows(1, 300, 4);
  for (auto _ : state) benchmark::DoNotOptimize(index.search(query, 30, workers));
}
BENCHMARK(BM_SearchWorkers)
    ->Args({200'000, 1})
    ->Args({200'000, 2})
    ->Args({200'000, 4})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

}  // namespace
