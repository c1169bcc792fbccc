// Serial reference kernels against their OpenMP counterparts. Both paths
// produce identical results; only the wall time differs.

#include <benchmark/benchmark.h>

#include <map>
#include <vector>

#include "coinfake/bank.hpp"
#include "coinfake/bpf.hpp"
#include "coinfake/mom.hpp"
#include "coinfake/seqdata.hpp"

namespace {

using namespace coinfake;

void propagate_kernel(benchmark::State& state, Exec exec) {
  const auto n0 = static_cast<std::size_t>(state.range(0));
  RngStream rng(11);
  const auto flips = generate_real(1, 64, rng).front().flips;
  const bpf::Dynamics dyn{0.05, 0.05};
  for (auto _ : state) {
    state.PauseTiming();
    RngStream init(3);
    auto ens = bpf::init_particles(n0, 5, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 4.5, init);
    state.ResumeTiming();
    for (std::size_t t = 0; t < flips.size(); ++t) {
      bpf::propagate(ens, flips[t], dyn, rng.child(t), exec);
    }
    benchmark::DoNotOptimize(ens.weight.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n0 * flips.size()));
}

void BM_PropagateSerial(benchmark::State& state) { propagate_kernel(state, Exec::Serial); }
void BM_PropagateOmp(benchmark::State& state) { propagate_kernel(state, Exec::Parallel); }
BENCHMARK(BM_PropagateSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PropagateOmp)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

struct ScoringFixture {
  bank::ModelBank bank;
  std::vector<SequenceRecord> records;

  ScoringFixture() {
    RngStream rng(5);
    for (std::size_t k = 0; k < 40; ++k) {
      auto m = mom::canonical_model(7, rng);
      bank.add({k % 2 ? Label::Real : Label::Simulator, "m" + std::to_string(k), std::move(m)});
    }
    records = generate_real(40, 200, rng);
  }
};

const ScoringFixture& scoring_fixture() {
  static const ScoringFixture f;
  return f;
}

void scoring_kernel(benchmark::State& state, Exec exec) {
  const auto& f = scoring_fixture();
  for (auto _ : state) {
    auto scores = bank::score_matrix(f.bank, f.records, exec);
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<std::int64_t>(f.bank.size() * f.records.size()));
}

void BM_ScoreSerial(benchmark::State& state) { scoring_kernel(state, Exec::Serial); }
void BM_ScoreOmp(benchmark::State& state) { scoring_kernel(state, Exec::Parallel); }
BENCHMARK(BM_ScoreSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreOmp)->Unit(benchmark::kMillisecond);

void training_kernel(benchmark::State& state, Exec exec) {
  RngStream data(9);
  bank::TrainingSets sets;
  sets[Label::Real] = generate_real(8, 200, data);
  bank::TrainOptions opts;
  opts.s_init = 3;
  opts.fit.max_iters = 50;
  opts.exec = exec;
  for (auto _ : state) {
    auto result = bank::train_bank(sets, opts, RngStream(1));
    benchmark::DoNotOptimize(result.bank.size());
  }
}

void BM_TrainSerial(benchmark::State& state) { training_kernel(state, Exec::Serial); }
void BM_TrainOmp(benchmark::State& state) { training_kernel(state, Exec::Parallel); }
BENCHMARK(BM_TrainSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainOmp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
