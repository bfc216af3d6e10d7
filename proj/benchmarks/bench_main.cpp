#include <numeric>
#include <sstream>

#include <benchmark/benchmark.h>

#include "rca/dataset.hpp"
#include "rca/feature_select.hpp"
#include "rca/random.hpp"
#include "rca/rules.hpp"
#include "rca/synthgen.hpp"
#include "rca/trees.hpp"

namespace {

struct Problem {
  rca::Matrix x;
  std::vector<int> y;
};

Problem make_problem(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rca::Rng rng(seed);
  Problem p{rca::Matrix(rows, cols), std::vector<int>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) p.x(r, c) = rng.uniform();
    p.y[r] = p.x(r, 0) + 0.5 * p.x(r, 1) > 0.8 ? 1 : 0;
  }
  return p;
}

void BM_BestSplit(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto p = make_problem(rows, 20, 1);
  std::vector<std::size_t> idx(rows), feats(20);
  std::iota(idx.begin(), idx.end(), 0);
  std::iota(feats.begin(), feats.end(), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rca::best_split(p.x, p.y, idx, feats, rca::TreeConfig{}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * 20));
}
BENCHMARK(BM_BestSplit)->Arg(64)->Arg(300)->Arg(2000);

void BM_FitForest(benchmark::State& state) {
  const auto p = make_problem(300, static_cast<std::size_t>(state.range(0)), 2);
  rca::ForestConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(rca::fit_forest(p.x, p.y, cfg));
}
BENCHMARK(BM_FitForest)->Arg(20)->Arg(372)->Unit(benchmark::kMillisecond);

void BM_FitBoosted(benchmark::State& state) {
  const auto p = make_problem(300, 50, 3);
  rca::BoostConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(rca::fit_boosted(p.x, p.y, cfg));
}
BENCHMARK(BM_FitBoosted)->Unit(benchmark::kMillisecond);

void BM_Boruta(benchmark::State& state) {
  const auto p = make_problem(300, 100, 4);
  rca::BorutaConfig cfg;
  cfg.n_iterations = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rca::boruta(p.x, p.y, cfg));
}
BENCHMARK(BM_Boruta)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Explain(benchmark::State& state) {
  const auto p = make_problem(300, 10, 5);
  rca::ForestConfig fc;
  fc.n_estimators = static_cast<std::size_t>(state.range(0));
  fc.max_depth = 4;
  const auto model = rca::fit_forest(p.x, p.y, fc);
  for (auto _ : state) benchmark::DoNotOptimize(rca::explain(model, p.x, rca::ExplainerConfig{}));
}
BENCHMARK(BM_Explain)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_ParseCsv(benchmark::State& state) {
  rca::SynthSpec spec;
  const auto data = rca::generate(spec);
  std::ostringstream out;
  rca::write_csv(out, data.sub_instances);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(rca::parse_csv(in, std::string("label")));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ParseCsv)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
