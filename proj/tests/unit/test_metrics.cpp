#include <cmath>
#include <vector>

#include <doctest.h>

#include "fbos/envs.hpp"
#include "fbos/metrics.hpp"
#include "fbos/policy.hpp"

using namespace fbos::metrics;
using fbos::envs::ConstraintClass;
using fbos::envs::Difficulty;

namespace {

constexpr double kTol = 1e-9;

EvaluatedPlan make_plan(int hard_pass, int hard_total, int cs_pass = 0, int cs_total = 0,
                        Difficulty d = Difficulty::kEasy) {
  EvaluatedPlan p;
  p.difficulty = d;
  for (int i = 0; i < hard_total; ++i) {
    p.constraint_results.push_back({ConstraintClass::kHard, i < hard_pass});
  }
  for (int i = 0; i < cs_total; ++i) {
    p.constraint_results.push_back({ConstraintClass::kCommonsense, i < cs_pass});
  }
  p.refresh();
  return p;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("all constraints passing gives 1 everywhere") {
    const std::vector<EvaluatedPlan> plans{make_plan(3, 3, 2, 2), make_plan(1, 1, 4, 4)};
    CHECK(micro_pass_rate(plans, ConstraintClass::kHard) == 1.0);
    CHECK(micro_pass_rate(plans, ConstraintClass::kCommonsense) == 1.0);
    CHECK(macro_pass_rate(plans, ConstraintClass::kHard) == 1.0);
    CHECK(final_pass_rate(plans) == 1.0);
  }

  TEST_CASE("A passes 3/4 and B 4/4: micro 7/8, macro 1/2, final 1/2") {
    const std::vector<EvaluatedPlan> plans{make_plan(3, 4), make_plan(4, 4)};
    CHECK(std::abs(micro_pass_rate(plans, ConstraintClass::kHard) - 7.0 / 8.0) < kTol);
    CHECK(std::abs(macro_pass_rate(plans, ConstraintClass::kHard) - 0.5) < kTol);
    CHECK(std::abs(final_pass_rate(plans) - 0.5) < kTol);
  }

  TEST_CASE("A passes 1/1 and B 0/100: micro 1/101 below macro 1/2") {
    const std::vector<EvaluatedPlan> plans{make_plan(1, 1), make_plan(0, 100)};
    const double micro = micro_pass_rate(plans, ConstraintClass::kHard);
    const double macro = macro_pass_rate(plans, ConstraintClass::kHard);
    CHECK(std::abs(micro - 1.0 / 101.0) < kTol);
    CHECK(std::abs(macro - 0.5) < kTol);
    CHECK(macro > micro);
  }

  TEST_CASE("a class with no constraints") {
    const std::vector<EvaluatedPlan> plans{make_plan(2, 2), make_plan(1, 2)};
    CHECK_THROWS_AS(micro_pass_rate(plans, ConstraintClass::kCommonsense), std::domain_error);
    // Vacuously satisfied for the macro rate.
    CHECK(macro_pass_rate(plans, ConstraintClass::kCommonsense) == 1.0);
    CHECK_THROWS(macro_pass_rate(std::vector<EvaluatedPlan>{}, ConstraintClass::kHard));
    CHECK_THROWS(final_pass_rate(std::vector<EvaluatedPlan>{}));
  }

  TEST_CASE("final pass requires every class") {
    const auto p = make_plan(2, 2, 0, 1);
    CHECK_FALSE(p.final_pass);
    const std::vector<EvaluatedPlan> plans{p};
    CHECK(macro_pass_rate(plans, ConstraintClass::kHard) == 1.0);
    CHECK(final_pass_rate(plans) == 0.0);
  }

  TEST_CASE("avg_score examples") {
    CHECK(avg_score(std::vector<double>{1, 1, 1}) == 1.0);
    CHECK(std::abs(avg_score(std::vector<double>{1, 0, -1})) < kTol);
    CHECK(std::abs(avg_score(std::vector<double>{1, 1, 0, -1}) - 0.25) < kTol);
    CHECK_THROWS(avg_score(std::vector<double>{}));
  }

  TEST_CASE("per-difficulty rates recombine into the overall rates") {
    std::vector<EvaluatedPlan> plans;
    const Difficulty ds[] = {Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard};
    for (int i = 0; i < 30; ++i) {
      const int total = 1 + i % 4;
      plans.push_back(make_plan((i * 7) % (total + 1), total, i % 2, 1, ds[i % 3]));
      plans.back().score = plans.back().final_pass ? 1.0 : 0.25 * (i % 3);
    }
    const auto s = summarize_by_difficulty(plans);
    double final_sum = 0.0, macro_sum = 0.0, score_sum = 0.0;
    double hard_passed = 0.0, hard_total = 0.0;
    for (int d = 0; d < 3; ++d) {
      REQUIRE(s.by_difficulty[d].has_value());
      const auto& r = *s.by_difficulty[d];
      final_sum += r.final_pass_rate * r.plans;
      macro_sum += r.hard_macro * r.plans;
      score_sum += r.avg_score * r.plans;
      int count = 0;
      for (const auto& p : plans) {
        if (static_cast<int>(p.difficulty) != d) continue;
        for (const auto& c : p.constraint_results) count += c.cls == ConstraintClass::kHard;
      }
      hard_passed += *r.hard_micro * count;
      hard_total += count;
    }
    CHECK(s.overall.plans == 30);
    CHECK(std::abs(final_sum / 30 - s.overall.final_pass_rate) < kTol);
    CHECK(std::abs(macro_sum / 30 - s.overall.hard_macro) < kTol);
    CHECK(std::abs(score_sum / 30 - s.overall.avg_score) < kTol);
    CHECK(std::abs(hard_passed / hard_total - *s.overall.hard_micro) < kTol);
  }

  TEST_CASE("evaluate: all-pass policy scores 1 and results are seed deterministic") {
    fbos::envs::ConstraintPlanEnv env;
    const std::vector<fbos::envs::Task> tasks{
        env.make_task("a", Difficulty::kEasy, {{0, 1}}, false, std::nullopt),
        env.make_task("b", Difficulty::kEasy, {{2, 3}}, false, std::nullopt)};
    auto p = fbos::policy::PolicyParams::linear_bag(env.vocab_ptr());
    auto w = p.mutable_weights();
    const int v = env.vocab().size();
    const fbos::TokenId plan[] = {env.value_token(1), env.value_token(0), env.value_token(3),
                                  fbos::Vocab::kEos};
    for (int t = 0; t < 4; ++t) w[static_cast<std::size_t>(t) * v + plan[t]] = 80.0;
    const fbos::sampling::SamplingConfig cfg{env.max_answer_len(), 32, 64};
    const auto s = evaluate(fbos::policy::PolicySnapshot(p, 0), env, tasks, 3, 0, 4, cfg);
    CHECK(s.overall.plans == 8);
    CHECK(s.overall.final_pass_rate == 1.0);
    CHECK(s.overall.hard_macro == 1.0);
    CHECK(*s.overall.hard_micro == 1.0);
    CHECK(s.overall.commonsense_macro == 1.0);
    CHECK(s.overall.avg_score == 1.0);

    const auto uniform = fbos::policy::PolicyParams::linear_bag(env.vocab_ptr());
    const fbos::policy::PolicySnapshot snap(uniform, 0);
    const auto a = evaluate_plans(snap, env, tasks, 11, 2, 16, cfg);
    const auto b = evaluate_plans(snap, env, tasks, 11, 2, 16, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].score == b[i].score);
      CHECK(a[i].task_id == b[i].task_id);
    }
  }
}
