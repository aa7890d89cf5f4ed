#include <benchmark/benchmark.h>

#include "fbos/envs.hpp"
#include "fbos/policy.hpp"
#include "fbos/rng.hpp"
#include "fbos/sampling.hpp"

namespace {

using namespace fbos;

policy::PolicyParams random_policy(const envs::Environment& env, policy::PolicyKind kind) {
  auto p = kind == policy::PolicyKind::kLinearBag
               ? policy::PolicyParams::linear_bag(env.vocab_ptr())
               : policy::PolicyParams::tabular(env.vocab_ptr(), 2);
  Rng rng(1);
  for (double& w : p.mutable_weights()) w = 0.3 * rng.normal();
  return p;
}

void BM_SampleRollout(benchmark::State& state) {
  const envs::ConstraintPlanEnv env;
  const auto kind = static_cast<policy::PolicyKind>(state.range(0));
  const policy::PolicySnapshot snap(random_policy(env, kind), 0);
  const auto task = env.make_suite({0, 0, 1, 3}).front();
  Rng rng(7);
  std::size_t tokens = 0;
  for (auto _ : state) {
    auto s = sampling::sample_rollout(snap, task.prompt, env.max_answer_len(), rng);
    tokens += s.tokens.size();
    benchmark::DoNotOptimize(s);
  }
  state.counters["tokens/s"] = benchmark::Counter(static_cast<double>(tokens),
                                                  benchmark::Counter::kIsRate);
  state.SetLabel(std::string(policy::to_string(kind)));
}
BENCHMARK(BM_SampleRollout)->Arg(0)->Arg(1);

// Both sampling rounds of one task: n initial rollouts, n FAPs, n*k refinements.
void BM_StepBatch(benchmark::State& state) {
  const envs::ConstraintPlanEnv env;
  const policy::PolicySnapshot snap(random_policy(env, policy::PolicyKind::kLinearBag), 0);
  const auto task = env.make_suite({0, 0, 1, 3}).front();
  const int n = static_cast<int>(state.range(0));
  const sampling::SamplingConfig cfg{env.max_answer_len(), 32, 64};
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto batch = sampling::sample_step_batch(snap, env, task, n, n,
                                             sampling::StreamKey::make(1, step++, task.id), cfg);
    benchmark::DoNotOptimize(batch);
  }
  state.SetItemsProcessed(state.iterations() * (n + n * n));
}
BENCHMARK(BM_StepBatch)->Arg(2)->Arg(4)->Arg(8);

}  // namespace
