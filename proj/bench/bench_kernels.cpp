// Serial reference vs OpenMP for each data-parallel kernel.
// Run with RLUF_THREADS=k to pin the OpenMP worker count.

#include <benchmark/benchmark.h>

#include <numeric>

#include "rluf/kernels.hpp"
#include "rluf/reward.hpp"

using namespace rluf;

namespace {

struct Fixture {
  World world{default_world_config()};
  Policy base = Policy::uniform(world);
  PolicySampler sampler{base};
  ConversationLog log = kernels::serial::simulate_log(world, sampler, 200000, 1);
  LabeledDataset data = to_rm_dataset(log, LabelSelector::kLove);
  std::vector<PreferencePair> pairs = make_preference_pairs(world, 50000, Task::kHelpfulness, 1);
  RewardModel mlp = RewardModel::initialized(Architecture::kMlp, data.dim, 16, 3);
  std::vector<std::size_t> rows;
  std::vector<std::size_t> pair_rows;
  Fixture() {
    rows.resize(data.size());
    std::iota(rows.begin(), rows.end(), 0);
    pair_rows.resize(pairs.size());
    std::iota(pair_rows.begin(), pair_rows.end(), 0);
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

template <bool Parallel>
void BM_simulate_tally(benchmark::State& st) {
  auto& f = fx();
  for (auto _ : st) {
    auto t = Parallel ? kernels::omp::simulate_tally(f.world, f.sampler, st.range(0), 7)
                      : kernels::serial::simulate_tally(f.world, f.sampler, st.range(0), 7);
    benchmark::DoNotOptimize(t.bye);
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void BM_simulate_log(benchmark::State& st) {
  auto& f = fx();
  for (auto _ : st) {
    auto l = Parallel ? kernels::omp::simulate_log(f.world, f.sampler, st.range(0), 7)
                      : kernels::serial::simulate_log(f.world, f.sampler, st.range(0), 7);
    benchmark::DoNotOptimize(l.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void BM_bce_loss_grad(benchmark::State& st) {
  auto& f = fx();
  std::vector<double> grad;
  for (auto _ : st) {
    double loss = Parallel ? kernels::omp::bce_loss_grad(f.mlp, f.data, f.rows, grad)
                           : kernels::serial::bce_loss_grad(f.mlp, f.data, f.rows, grad);
    benchmark::DoNotOptimize(loss);
  }
  st.SetItemsProcessed(st.iterations() * f.rows.size());
}

template <bool Parallel>
void BM_bt_loss_grad(benchmark::State& st) {
  auto& f = fx();
  std::vector<double> grad;
  for (auto _ : st) {
    double loss = Parallel ? kernels::omp::bt_loss_grad(f.mlp, f.pairs, f.pair_rows, grad)
                           : kernels::serial::bt_loss_grad(f.mlp, f.pairs, f.pair_rows, grad);
    benchmark::DoNotOptimize(loss);
  }
  st.SetItemsProcessed(st.iterations() * f.pair_rows.size());
}

template <bool Parallel>
void BM_score_table(benchmark::State& st) {
  auto& f = fx();
  for (auto _ : st) {
    auto t = Parallel ? kernels::omp::score_table(f.mlp, f.world) : kernels::serial::score_table(f.mlp, f.world);
    benchmark::DoNotOptimize(t.data());
  }
}

}  // namespace

BENCHMARK(BM_simulate_tally<false>)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_simulate_tally<true>)->Arg(1 << 20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_simulate_log<false>)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_simulate_log<true>)->Arg(1 << 18)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bce_loss_grad<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bce_loss_grad<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bt_loss_grad<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_bt_loss_grad<true>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_table<false>)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_score_table<true>)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
