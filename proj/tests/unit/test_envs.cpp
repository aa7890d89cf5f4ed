#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "fbos/envs.hpp"
#include "fbos/task_io.hpp"

using namespace fbos::envs;
using fbos::TokenId;
using fbos::Vocab;

namespace {

std::vector<TokenId> plan(const ConstraintPlanEnv& env, std::initializer_list<int> values) {
  std::vector<TokenId> out;
  for (int v : values) out.push_back(env.value_token(v));
  out.push_back(Vocab::kEos);
  return out;
}

// Independent reading of the constraint rules, used as a satisfiability oracle.
bool satisfies(const Task& task, const std::vector<int>& values) {
  for (const auto& c : task.constraints) {
    switch (c.kind) {
      case ConstraintKind::kFormat:
        if (static_cast<int>(values.size()) != c.limit) return false;
        break;
      case ConstraintKind::kRequiredValue:
        if (values.at(c.position) != c.value) return false;
        break;
      case ConstraintKind::kNoRepeat:
        for (std::size_t i = 1; i < values.size(); ++i) {
          if (values[i] == values[i - 1]) return false;
        }
        break;
      case ConstraintKind::kBudget: {
        int cost = 0;
        for (int v : values) cost += v;
        if (cost > c.limit) return false;
        break;
      }
      default:
        return false;
    }
  }
  return true;
}

bool brute_force_satisfiable(const Task& task, int num_values) {
  int length = 0;
  for (const auto& c : task.constraints) {
    if (c.kind == ConstraintKind::kFormat) length = c.limit;
  }
  std::vector<int> digits(length, 0);
  while (true) {
    if (satisfies(task, digits)) return true;
    int i = length - 1;
    while (i >= 0 && ++digits[i] == num_values) digits[i--] = 0;
    if (i < 0) return false;
  }
}

}  // namespace

TEST_SUITE("envs") {
  TEST_CASE("constraint plan: satisfying answer gets reward 1 and no feedback") {
    const ConstraintPlanEnv env;
    const Task t = env.make_task("t", Difficulty::kMedium, {{0, 2}, {3, 1}}, true, 8);
    const auto r = env.verify(t, plan(env, {2, 0, 3, 1}));
    CHECK(r.reward == 1.0);
    CHECK(r.all_passed());
    CHECK(r.violations.empty());
    CHECK(render_feedback(r, 32).empty());
    CHECK(r.constraint_results.size() == t.constraints.size());
  }

  TEST_CASE("constraint plan: partial reward is half the pass fraction") {
    const ConstraintPlanEnv env;
    const Task t = env.make_task("t", Difficulty::kEasy, {{0, 1}, {1, 2}}, true, std::nullopt);
    // format, norepeat, req@0 pass; req@1 fails.
    const auto r = env.verify(t, plan(env, {1, 0, 4}));
    REQUIRE(t.constraints.size() == 4);
    CHECK(r.reward == doctest::Approx(0.5 * 3.0 / 4.0).epsilon(1e-15));
    CHECK(r.violations.size() == 1);
    CHECK(r.violations[0].constraint_id == "req@1");
    CHECK(r.violations[0].locus == 1);
  }

  TEST_CASE("constraint plan: truncated or unparseable answers fail format only") {
    const ConstraintPlanEnv env;
    const Task t = env.make_task("t", Difficulty::kEasy, {}, false, std::nullopt);
    const std::vector<TokenId> truncated{env.value_token(1), env.value_token(2)};
    const auto r = env.verify(t, truncated);
    CHECK_FALSE(r.all_passed());
    CHECK(r.violations.size() == 1);
    CHECK(r.violations[0].constraint_id == "format");
    const std::vector<TokenId> junk{Vocab::kSepFeedback, Vocab::kEos};
    CHECK(env.verify(t, junk).violations[0].locus == 0);
  }

  TEST_CASE("grammar proof: correct, wrong and malformed proofs score 1, 0, -1") {
    const GrammarProofEnv env;
    const Task t = env.make_task("p", Difficulty::kEasy, 2, 4);
    using R = GrammarProofEnv::Rule;
    const TokenId inc = env.rule_token(R::kInc), dec = env.rule_token(R::kDec),
                  dbl = env.rule_token(R::kDouble), qed = env.qed();
    CHECK(env.verify(t, std::vector<TokenId>{inc, inc, qed, Vocab::kEos}).reward == 1.0);
    CHECK(env.verify(t, std::vector<TokenId>{dbl, qed, Vocab::kEos}).reward == 1.0);
    // Well formed, wrong result.
    CHECK(env.verify(t, std::vector<TokenId>{dec, qed, Vocab::kEos}).reward == 0.0);
    // Not finished: well formed but stops short.
    CHECK(env.verify(t, std::vector<TokenId>{inc, qed, Vocab::kEos}).reward == 0.0);
    // Malformed.
    CHECK(env.verify(t, std::vector<TokenId>{qed, inc, Vocab::kEos}).reward == -1.0);
    CHECK(env.verify(t, std::vector<TokenId>{inc, inc, qed}).reward == -1.0);
    CHECK(env.verify(t, std::vector<TokenId>{Vocab::kEos}).reward == -1.0);
  }

  TEST_CASE("render_feedback: single budget violation is the budget template") {
    const ConstraintPlanEnv env;
    const Task t = env.make_task("t", Difficulty::kEasy, {{0, 1}}, false, 3);
    // Costs 1, 3, 4: the budget is first exceeded at slot 2.
    const auto r = env.verify(t, plan(env, {1, 2, 1}));
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].constraint_id == "budget");
    const auto& v = env.vocab();
    CHECK(render_feedback(r, 32) == std::vector<TokenId>{v.id("fb:budget"), v.id("@2")});
  }

  TEST_CASE("render_feedback: violation order does not matter") {
    const ConstraintPlanEnv env;
    const Task t = env.make_task("t", Difficulty::kEasy, {{0, 1}}, true, std::nullopt);
    auto r = env.verify(t, plan(env, {0, 2, 2}));
    REQUIRE(r.violations.size() == 2);
    const auto forward = render_feedback(r, 32);
    std::reverse(r.violations.begin(), r.violations.end());
    CHECK(render_feedback(r, 32) == forward);
    // Hard class renders first.
    const auto& v = env.vocab();
    CHECK(forward.front() == v.id("fb:need"));
    // Truncation drops the commonsense entry first.
    const auto cut = render_feedback(r, 3);
    CHECK(cut == std::vector<TokenId>{v.id("fb:need"), v.id("@0"), env.value_token(1)});
    CHECK(render_feedback(r, 0).empty());
  }

  TEST_CASE("feedback entries never contain separators") {
    const ConstraintPlanEnv env;
    const auto tasks = env.make_suite({3, 3, 3, 5});
    for (const auto& t : tasks) {
      const auto r = env.verify(t, plan(env, {4, 4, 4, 4, 4, 4, 4}));
      for (TokenId tok : render_feedback(r, 64)) CHECK_FALSE(env.vocab().is_separator(tok));
    }
  }

  TEST_CASE("make_toy_suite {2,2,2} seed 7 is deterministic") {
    const ConstraintPlanEnv env;
    const auto a = env.make_suite({2, 2, 2, 7});
    const auto b = env.make_suite({2, 2, 2, 7});
    REQUIRE(a.size() == 6);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      CHECK(a[i].prompt == b[i].prompt);
      ids.insert(a[i].id);
    }
    CHECK(ids.size() == 6);
    const auto other = env.make_suite({2, 2, 2, 8});
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].prompt != other[i].prompt;
    CHECK(differs);
  }

  TEST_CASE("every generated task is satisfiable by exhaustive search") {
    const ConstraintPlanEnv env;
    const auto tasks = env.make_suite({10, 10, 10, 3});
    for (const auto& t : tasks) {
      CHECK(brute_force_satisfiable(t, env.config().num_values));
      CHECK(env.satisfiable(t));
    }
    const GrammarProofEnv proof;
    for (const auto& t : proof.make_suite({5, 5, 5, 3})) CHECK(proof.satisfiable(t));
  }

  TEST_CASE("hard tasks carry strictly more constraints than easy tasks") {
    const ConstraintPlanEnv env;
    const auto tasks = env.make_suite({8, 8, 8, 21});
    std::size_t max_easy = 0, min_hard = 1000;
    for (const auto& t : tasks) {
      if (t.difficulty == Difficulty::kEasy) max_easy = std::max(max_easy, t.constraints.size());
      if (t.difficulty == Difficulty::kHard) min_hard = std::min(min_hard, t.constraints.size());
    }
    CHECK(min_hard > max_easy);
  }

  TEST_CASE("infeasible task specifications are generation errors") {
    const ConstraintPlanEnv env;
    CHECK_THROWS_AS(env.make_task("x", Difficulty::kEasy, {{0, 4}}, false, 2), GenerationError);
    CHECK_THROWS_AS(env.make_task("x", Difficulty::kEasy, {{0, 1}, {1, 1}}, true, std::nullopt),
                    GenerationError);
    CHECK_THROWS_AS(env.make_task("x", Difficulty::kEasy, {{5, 1}}, false, std::nullopt),
                    GenerationError);
    const GrammarProofEnv proof;
    CHECK_THROWS_AS(proof.make_task("y", Difficulty::kEasy, 0, 99), GenerationError);
  }

  TEST_CASE("suite text format round trips") {
    for (const auto& name : {"constraint_plan", "grammar_proof"}) {
      const auto env = make_environment(name);
      const auto tasks = env->make_suite({2, 2, 2, 7});
      std::stringstream buf;
      write_suite(buf, tasks, env->vocab());
      const auto back = read_suite(buf, env->vocab());
      REQUIRE(back.size() == tasks.size());
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        CHECK(task_to_line(back[i], env->vocab()) == task_to_line(tasks[i], env->vocab()));
        CHECK(back[i].prompt == tasks[i].prompt);
      }
    }
  }

  TEST_CASE("malformed suite lines are rejected") {
    const ConstraintPlanEnv env;
    CHECK_THROWS(task_from_line("{not json", env.vocab()));
    CHECK_THROWS(task_from_line(R"({"id":"a","env":"constraint_plan","difficulty":"easy",)"
                                R"("prompt":["no-such-token"],"constraints":[]})",
                                env.vocab()));
  }
}
