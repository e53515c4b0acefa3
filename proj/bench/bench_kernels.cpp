// Serial reference versus OpenMP kernels on desk-scale inputs.
//
//   ./bench_kernels --benchmark_filter=Prefixes

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "scrc/data.hpp"
#include "scrc/harness.hpp"
#include "scrc/kernels.hpp"

namespace {

using namespace scrc;

const std::vector<LabeledLogits>& records() {
  static const auto r = [] {
    SynthConfig cfg;
    cfg.n_samples = 4000;
    cfg.seed = 1;
    return generate(cfg);
  }();
  return r;
}

const std::vector<ScoredExample>& scored() {
  static const auto s = kernels::serial::score_records(records(), ScoreKind{}, nullptr);
  return s;
}

template <bool Parallel>
void BM_ScoreRecords(benchmark::State& state) {
  for (auto _ : state) {
    auto out = Parallel ? kernels::score_records(records(), ScoreKind{}, nullptr)
                        : kernels::serial::score_records(records(), ScoreKind{}, nullptr);
    benchmark::DoNotOptimize(out);
  }
}

template <bool Parallel>
void BM_TransductiveLambda1(benchmark::State& state) {
  std::vector<double> cal, test;
  for (std::size_t i = 0; i < scored().size(); ++i) {
    (i < 2000 ? cal : test).push_back(scored()[i].confidence);
  }
  std::sort(cal.begin(), cal.end());
  for (auto _ : state) {
    auto out = Parallel ? kernels::transductive_lambda1(cal, test, 0.7)
                        : kernels::serial::transductive_lambda1(cal, test, 0.7);
    benchmark::DoNotOptimize(out);
  }
}

template <bool Parallel>
void BM_SolvePrefixes(benchmark::State& state) {
  const std::span<const ScoredExample> cal(scored().data(), 2000);
  const CalibrationTable table(cal);
  std::vector<std::size_t> ms;
  for (std::size_t m = 10; m <= table.size(); m += 10) ms.push_back(m);
  const RiskSpec spec;
  const auto loss = state.range(0) == 0 ? LossKind::miscoverage() : LossKind::weighted_ordinal(10);
  for (auto _ : state) {
    auto out = Parallel ? kernels::solve_prefixes(table, ms, Method::kScrcT, spec, loss)
                        : kernels::serial::solve_prefixes(table, ms, Method::kScrcT, spec, loss);
    benchmark::DoNotOptimize(out);
  }
}

template <bool Parallel>
void BM_ApplyDecisions(benchmark::State& state) {
  std::vector<kernels::Decision> decisions(scored().size());
  for (std::size_t i = 0; i < decisions.size(); ++i) decisions[i] = {i % 4 != 0, 0.8};
  for (auto _ : state) {
    auto out = Parallel ? kernels::apply_decisions(scored(), decisions, LossKind::miscoverage())
                        : kernels::serial::apply_decisions(scored(), decisions, LossKind::miscoverage());
    benchmark::DoNotOptimize(out);
  }
}

void BM_SweepTrial(benchmark::State& state) {
  SweepConfig cfg;
  cfg.values = {"0.7"};
  cfg.n_trials = 1;
  for (auto _ : state) {
    auto rows = run_trial(cfg, 0, 0, nullptr);
    benchmark::DoNotOptimize(rows);
  }
}

}  // namespace

BENCHMARK(BM_ScoreRecords<false>)->Name("ScoreRecords/serial");
BENCHMARK(BM_ScoreRecords<true>)->Name("ScoreRecords/omp");
BENCHMARK(BM_TransductiveLambda1<false>)->Name("TransductiveLambda1/serial");
BENCHMARK(BM_TransductiveLambda1<true>)->Name("TransductiveLambda1/omp");
BENCHMARK(BM_SolvePrefixes<false>)->Name("SolvePrefixes/serial")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SolvePrefixes<true>)->Name("SolvePrefixes/omp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ApplyDecisions<false>)->Name("ApplyDecisions/serial");
BENCHMARK(BM_ApplyDecisions<true>)->Name("ApplyDecisions/omp");
BENCHMARK(BM_SweepTrial)->Name("SweepTrial/all-methods")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
