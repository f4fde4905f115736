#include <benchmark/benchmark.h>

#include <vector>

#include "selfevo/grpo.hpp"
#include "selfevo/policy.hpp"
#include "selfevo/shaping.hpp"
#include "selfevo/sim_env.hpp"

using namespace selfevo;

static void BM_ShapeGroup(benchmark::State& state) {
  Rng rng(1);
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  for (auto& r : rewards) r = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(shape_group(rewards, ShapingParams{}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ShapeGroup)->Arg(8)->Arg(64)->Arg(512);

static void BM_SampleGroup(benchmark::State& state) {
  const bool sequence = state.range(0) != 0;
  std::vector<TaskVocabulary> vocab = {{"q", {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"}}};
  const auto policy = sequence ? PolicyTable::sequence(vocab, 4) : PolicyTable::categorical(vocab);
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(sample_group(policy, "q", 8, rng));
}
BENCHMARK(BM_SampleGroup)->Arg(0)->Arg(1);

static void BM_GrpoStep(benchmark::State& state) {
  const Scenario s = make_preset("benign");
  PolicyTable policy = initial_policy(s);
  const PolicySnapshot ref(policy);
  Rng rng(3);
  std::vector<ScoredGroup> batch;
  for (const auto& t : s.tasks) {
    ScoredGroup g;
    g.group = build_group(sample_group(policy, t.task_id, 8, rng));
    g.advantages = shape_group(sc_rewards(g.group), ShapingParams{}).advantages;
    batch.push_back(std::move(g));
  }
  GrpoConfig cfg;
  cfg.learning_rate = 1e-6;  // keep the policy close to where the batch was sampled
  for (auto _ : state) {
    PolicySnapshot old(policy);
    benchmark::DoNotOptimize(grpo_step(policy, old, ref, batch, cfg));
  }
}
BENCHMARK(BM_GrpoStep);

static void BM_RunLoopStep(benchmark::State& state) {
  Scenario s = make_preset("benign");
  s.steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_loop(s));
}
BENCHMARK(BM_RunLoopStep);

BENCHMARK_MAIN();
