#include <benchmark/benchmark.h>

#include "fbos/envs.hpp"
#include "fbos/objectives.hpp"
#include "fbos/policy.hpp"
#include "fbos/rng.hpp"
#include "fbos/sampling.hpp"

namespace {

using namespace fbos;

struct LossFixture {
  envs::ConstraintPlanEnv env;
  envs::Task task = env.make_suite({0, 0, 1, 3}).front();
  policy::PolicyParams old = policy::PolicyParams::linear_bag(env.vocab_ptr());
  policy::PolicyParams theta = old;
  sampling::StepBatch batch;
  sampling::Groups groups;
  objectives::AdvantageSet epa_adv;
  std::vector<objectives::AdvantageSet> ecc_advs;

  LossFixture() {
    Rng rng(3);
    for (double& w : old.mutable_weights()) w = 0.3 * rng.normal();
    theta = old;
    for (double& w : theta.mutable_weights()) w += 0.05 * rng.normal();
    const sampling::SamplingConfig cfg{env.max_answer_len(), 32, 64};
    batch = sampling::sample_step_batch(policy::PolicySnapshot(old, 0), env, task, 8, 8,
                                        sampling::StreamKey::make(1, 0, task.id), cfg);
    groups = sampling::assemble_groups(batch);
    const auto r = groups.epa.rewards();
    epa_adv = objectives::group_advantages(r, 1e-6);
    for (const auto& g : groups.ecc) {
      const auto gr = g.rewards();
      ecc_advs.push_back(objectives::group_advantages(gr, 1e-6));
    }
  }
};

void BM_EpaLoss(benchmark::State& state) {
  const LossFixture f;
  for (auto _ : state) {
    auto rep = objectives::epa_loss(f.theta, f.batch, f.epa_adv, {});
    benchmark::DoNotOptimize(rep);
  }
  state.SetItemsProcessed(state.iterations() * f.batch.total());
}
BENCHMARK(BM_EpaLoss);

void BM_EccLoss(benchmark::State& state) {
  const LossFixture f;
  for (auto _ : state) {
    auto rep = objectives::ecc_loss(f.theta, f.groups.ecc, f.ecc_advs, {});
    benchmark::DoNotOptimize(rep);
  }
  state.SetItemsProcessed(state.iterations() * f.batch.n * f.batch.k);
}
BENCHMARK(BM_EccLoss);

void BM_GroupAdvantages(benchmark::State& state) {
  std::vector<double> rewards(static_cast<std::size_t>(state.range(0)));
  Rng rng(5);
  for (double& r : rewards) r = rng.uniform();
  for (auto _ : state) {
    auto a = objectives::group_advantages(rewards, 1e-6);
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_GroupAdvantages)->Arg(8)->Arg(72);

}  // namespace
