// Serial reference vs OpenMP kernels for exact retrieval and evaluation.

#include <benchmark/benchmark.h>

#include "cytorag/evaluation.hpp"
#include "cytorag/retrieval.hpp"
#include "cytorag/synth.hpp"

using namespace cytorag;

namespace {

const StoreSnapshot& corpus(std::size_t n, std::size_t dim) {
  static std::map<std::pair<std::size_t, std::size_t>, StoreSnapshot> cache;
  auto it = cache.find({n, dim});
  if (it == cache.end()) {
    SynthConfig cfg;
    cfg.n_cases = n;
    cfg.dim = dim;
    cfg.seed = 1;
    cfg.encoders = {"uni"};
    it = cache.emplace(std::make_pair(n, dim), generate_synthetic(cfg).to_snapshot()).first;
  }
  return it->second;
}

void top_k_bench(benchmark::State& state, Execution exec) {
  const auto& snap = corpus(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto& q = snap.cases().front();
  const Embedding query{EncoderId("uni"), q.embeddings.at(EncoderId("uni"))};
  const auto filter = ExclusionFilter::for_case(ExclusionMode::SameCase, q.case_id);
  for (auto _ : state) benchmark::DoNotOptimize(top_k(query, 5, filter, snap, exec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void evaluate_bench(benchmark::State& state, Execution exec) {
  const auto& snap = corpus(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_all(snap, {}, exec));
}

}  // namespace

BENCHMARK_CAPTURE(top_k_bench, serial, Execution::Serial)->Args({1000, 64})->Args({20000, 256});
BENCHMARK_CAPTURE(top_k_bench, parallel, Execution::Parallel)->Args({1000, 64})->Args({20000, 256});
BENCHMARK_CAPTURE(evaluate_bench, serial, Execution::Serial)->Arg(300)->Arg(900)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(evaluate_bench, parallel, Execution::Parallel)->Arg(300)->Arg(900)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
