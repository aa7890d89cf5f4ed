#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <doctest.h>

#include "fbos/envs.hpp"
#include "fbos/objectives.hpp"
#include "fbos/sampling.hpp"
#include "fbos/trainer.hpp"

using namespace fbos::trainer;
using fbos::envs::ConstraintPlanEnv;
using fbos::envs::Difficulty;
using fbos::envs::Task;

namespace {

struct Setup {
  ConstraintPlanEnv env;
  std::vector<Task> suite = env.make_suite({2, 2, 2, 3});
  TrainConfig cfg;

  explicit Setup(Method m) {
    cfg.method = m;
    cfg.seed = 99;
    cfg.sampling.max_answer_len = env.max_answer_len();
    cfg.optimizer.learning_rate = 0.5;
  }
  TrainerState state() const { return make_state(cfg, env.vocab_ptr()); }
  std::vector<const Task*> tasks(int step) const {
    return tasks_for_step(suite, step, cfg.tasks_per_step);
  }
};

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("optimizer: zero grad, unit step and linearity") {
    std::vector<double> p{1.0, -2.0, 0.5};
    Optimizer sgd({OptimizerKind::kSgd, 1.0});
    const std::vector<double> zero(3, 0.0);
    CHECK(sgd.apply(p, zero) == 0.0);
    CHECK(p == std::vector<double>{1.0, -2.0, 0.5});

    const std::vector<double> g{0.25, 0.5, -1.0};
    CHECK(sgd.apply(p, g) == doctest::Approx(std::sqrt(0.0625 + 0.25 + 1.0)));
    CHECK(p == std::vector<double>{0.75, -2.5, 1.5});

    std::vector<double> full{0.0, 0.0, 0.0}, half = full;
    Optimizer one({OptimizerKind::kSgd, 0.5}), two({OptimizerKind::kSgd, 0.25});
    one.apply(full, g);
    two.apply(half, g);
    two.apply(half, g);
    for (int i = 0; i < 3; ++i) CHECK(full[i] == half[i]);
  }

  TEST_CASE("optimizer rejects non-finite gradients") {
    std::vector<double> p{1.0};
    Optimizer sgd;
    const std::vector<double> bad{NAN};
    CHECK_THROWS_AS(sgd.apply(p, bad), std::domain_error);
    Optimizer adam({OptimizerKind::kAdam, 0.1});
    const std::vector<double> inf{INFINITY};
    CHECK_THROWS_AS(adam.apply(p, inf), std::domain_error);
  }

  TEST_CASE("adam first step moves each coordinate by the learning rate") {
    std::vector<double> p{0.0, 0.0};
    Optimizer adam({OptimizerKind::kAdam, 0.1});
    const std::vector<double> g{3.0, -0.5};
    adam.apply(p, g);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(adam.steps_taken() == 1);
  }

  TEST_CASE("every method samples 72 rollouts per task with the documented update count") {
    for (Method m : kAllMethods) {
      CAPTURE(to_string(m));
      Setup s(m);
      s.cfg.tasks_per_step = 2;
      auto st = s.state();
      int observed = 0;
      const auto metrics = train_step(st, s.env, s.tasks(0), s.cfg,
                                      [&](const fbos::sampling::StepBatch& b) {
                                        observed += b.total();
                                      });
      CHECK(metrics.rollouts == 144);
      CHECK(observed == 144);
      CHECK(st.rollouts_sampled == 144);
      const int want = (m == Method::kFbos || m == Method::kGrpoExtraUpdate) ? 2 : 1;
      CHECK(updates_per_step(m) == want);
      CHECK(metrics.updates == want);
      CHECK(st.updates_applied == static_cast<std::uint64_t>(want));
      CHECK(st.optimizer.steps_taken() == want);
      // Two tasks: EPA and GRPO updates see 2 x 72 rollouts, ECC and the
      // extra update 2 x 64.
      const std::map<Method, std::vector<std::size_t>> per_update{
          {Method::kFbos, {144, 128}},
          {Method::kGrpo, {144}},
          {Method::kGrpoExtraUpdate, {144, 128}},
          {Method::kFbosWoEpa, {128}},
          {Method::kFbosWoEcc, {144}}};
      CHECK(metrics.update_rollouts == per_update.at(m));
    }
  }

  TEST_CASE("extra-update subset holds 64 distinct indices of 72, deterministic in seed") {
    const auto a = sample_subset(72, 64, 5);
    const auto b = sample_subset(72, 64, 5);
    CHECK(a == b);
    REQUIRE(a.size() == 64);
    CHECK(std::set<int>(a.begin(), a.end()).size() == 64);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(a.front() >= 0);
    CHECK(a.back() < 72);
    CHECK(sample_subset(72, 64, 6) != a);
  }

  TEST_CASE("metric fields are populated per method") {
    for (Method m : kAllMethods) {
      CAPTURE(to_string(m));
      Setup s(m);
      auto st = s.state();
      const auto row = train_step(st, s.env, s.tasks(0), s.cfg);
      CHECK(row.step == 1);
      CHECK(row.method == m);
      CHECK(std::isfinite(row.entropy));
      CHECK(row.entropy > 0.0);
      CHECK(std::isfinite(row.grad_norm));
      CHECK(row.fap_score_mean.has_value() == uses_feedback(m));
      CHECK(row.fap_score_max.has_value() == uses_feedback(m));
      CHECK(row.epa_loss.has_value() == (m == Method::kFbos || m == Method::kFbosWoEcc));
      CHECK(row.ecc_loss.has_value() == (m == Method::kFbos || m == Method::kFbosWoEpa));
      CHECK(row.grpo_loss.has_value() == !uses_feedback(m));
      const auto& d = row.by_difficulty[static_cast<int>(s.suite[0].difficulty)];
      CHECK(d.tasks == 1);
      CHECK(d.train_score_mean.has_value());
    }
  }

  TEST_CASE("a batch of equal rewards leaves theta unchanged") {
    // A near-deterministic policy that always emits the same satisfying plan.
    ConstraintPlanEnv env;
    const Task task = env.make_task("fixed", Difficulty::kEasy, {{0, 1}}, false, std::nullopt);
    for (Method m : kAllMethods) {
      CAPTURE(to_string(m));
      TrainConfig cfg;
      cfg.method = m;
      cfg.seed = 4;
      cfg.sampling.max_answer_len = env.max_answer_len();
      auto st = make_state(cfg, env.vocab_ptr());
      auto w = st.params.mutable_weights();
      const int v = env.vocab().size();
      const fbos::TokenId plan[] = {env.value_token(1), env.value_token(2), env.value_token(3),
                                    fbos::Vocab::kEos};
      for (int t = 0; t < 4; ++t) w[static_cast<std::size_t>(t) * v + plan[t]] = 80.0;
      const std::vector<double> before(w.begin(), w.end());
      const Task* tasks[] = {&task};
      const auto row = train_step(st, env, tasks, cfg);
      CHECK(row.train_score_std == 0.0);
      CHECK(row.grad_norm == 0.0);
      const auto after = st.params.weights();
      CHECK(std::equal(after.begin(), after.end(), before.begin()));
    }
  }

  TEST_CASE("same config and seed give a bitwise identical trajectory") {
    for (Method m : {Method::kFbos, Method::kGrpoExtraUpdate}) {
      Setup s(m);
      auto a = s.state();
      auto b = s.state();
      for (int step = 0; step < 3; ++step) {
        train_step(a, s.env, s.tasks(step), s.cfg);
        train_step(b, s.env, s.tasks(step), s.cfg);
        CHECK(a.params == b.params);
      }
    }
  }

  TEST_CASE("grpo step equals one SGD step on the GRPO loss over 72 rollouts") {
    Setup s(Method::kGrpo);
    s.cfg.optimizer.learning_rate = 0.3;
    auto st = s.state();
    fbos::sampling::StepBatch seen;
    const auto theta_old = st.params;
    train_step(st, s.env, s.tasks(0), s.cfg,
               [&](const fbos::sampling::StepBatch& b) { seen = b; });
    REQUIRE(seen.total() == 72);
    CHECK(seen.initial_rollouts.size() == 72);
    CHECK(seen.k == 0);
    fbos::sampling::RolloutGroup group;
    for (const auto& r : seen.initial_rollouts) group.members.push_back(&r);
    const auto rewards = group.rewards();
    const auto adv = fbos::objectives::group_advantages(rewards, s.cfg.eps_adv);
    const auto rep = fbos::objectives::grpo_loss(theta_old, group, adv, s.cfg.clip);
    auto expect = theta_old;
    auto w = expect.mutable_weights();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.3 * rep.grad[i];
    const auto got = st.params.weights();
    double max_diff = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) max_diff = std::max(max_diff, std::abs(got[i] - w[i]));
    CHECK(max_diff < 1e-12);
  }

  TEST_CASE("task order wraps around the suite") {
    Setup s(Method::kFbos);
    const auto t = tasks_for_step(s.suite, 2, 4);
    REQUIRE(t.size() == 4);
    CHECK(t[0] == &s.suite[2]);
    CHECK(t[3] == &s.suite[5]);
    const auto wrap = tasks_for_step(s.suite, 1, 4);
    CHECK(wrap[2] == &s.suite[0]);
  }

  TEST_CASE("train config validation and method names") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.budget_per_task() == 72);
    cfg.repeats = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    for (Method m : kAllMethods) CHECK(method_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(method_from_string("ppo"), std::invalid_argument);
  }
}
