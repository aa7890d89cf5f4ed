#include <benchmark/benchmark.h>

#include "fbos/envs.hpp"
#include "fbos/trainer.hpp"

namespace {

using namespace fbos;

// One full training step (sampling plus every update) for each method.
void BM_TrainStep(benchmark::State& state) {
  const envs::ConstraintPlanEnv env;
  const auto suite = env.make_suite({4, 4, 4, 1});
  trainer::TrainConfig cfg;
  cfg.method = trainer::kAllMethods[state.range(0)];
  cfg.tasks_per_step = 4;
  cfg.sampling.max_answer_len = env.max_answer_len();
  auto st = trainer::make_state(cfg, env.vocab_ptr());
  int step = 0;
  for (auto _ : state) {
    auto m = trainer::train_step(st, env, trainer::tasks_for_step(suite, step++, 4), cfg);
    benchmark::DoNotOptimize(m);
  }
  state.SetItemsProcessed(state.iterations() * cfg.tasks_per_step * cfg.budget_per_task());
  state.SetLabel(std::string(trainer::to_string(cfg.method)));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

}  // namespace
