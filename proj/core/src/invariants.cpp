#include "fbos/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "fbos/compare.hpp"
#include "fbos/config.hpp"
#include "fbos/envs.hpp"
#include "fbos/experiment.hpp"
#include "fbos/gradcheck.hpp"
#include "fbos/metrics.hpp"
#include "fbos/objectives.hpp"
#include "fbos/policy.hpp"
#include "fbos/rng.hpp"
#include "fbos/sampling.hpp"
#include "fbos/trainer.hpp"

namespace fbos::invariants {
namespace {

// Runs `cases` draws of a property; the first failing draw is reported.
class Property {
 public:
  Property(std::string module, std::string name, std::uint64_t seed)
      : result_{std::move(module), std::move(name), 0, true, {}},
        seed_(derive_seed({seed, sampling::hash_task_id(result_.module + "/" + result_.name)})) {}

  // `body` returns an empty string on success or a counterexample description.
  Property& run(int cases, const std::function<std::string(Rng&, int)>& body) {
    for (int c = 0; c < cases && result_.passed; ++c) {
      Rng rng(derive_seed({seed_, static_cast<std::uint64_t>(c)}));
      std::string err;
      try {
        err = body(rng, c);
      } catch (const std::exception& e) {
        err = fmt::format("exception: {}", e.what());
      }
      ++result_.cases;
      if (!err.empty()) fail(fmt::format("case {}: {}", c, err));
    }
    return *this;
  }

  // A final check over everything the cases observed.
  Property& require(bool ok, const std::string& detail) {
    if (result_.passed && !ok) fail(detail);
    return *this;
  }

  Result result() const { return result_; }

 private:
  void fail(std::string detail) {
    result_.passed = false;
    result_.detail = std::move(detail);
  }

  Result result_;
  std::uint64_t seed_;
};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

int below(Rng& rng, int n) { return static_cast<int>(rng.below(static_cast<std::size_t>(n))); }

// ---------------------------------------------------------------- policy

struct SmallPolicy {
  std::shared_ptr<const Vocab> vocab;
  policy::PolicyParams params;
};

SmallPolicy small_policy(Rng& rng, double weight_scale) {
  Vocab::Builder b;
  const int content = 2 + below(rng, 3);
  for (int i = 0; i < content; ++i) b.add(fmt::format("c{}", i), TokenClass::kContent);
  b.add("fb", TokenClass::kFeedbackKind);
  for (int i = 0; i < 3; ++i) b.add(fmt::format("@{}", i), TokenClass::kPosition, i);
  auto vocab = std::make_shared<const Vocab>(std::move(b).build());
  auto params = rng.below(2) == 0 ? policy::PolicyParams::tabular(vocab, 1 + below(rng, 2))
                                  : policy::PolicyParams::linear_bag(vocab, {1 + below(rng, 3)});
  for (double& w : params.mutable_weights()) w = weight_scale * rng.normal();
  if (rng.below(4) == 0) params.set_temperature(uniform(rng, 0.5, 2.0));
  return {vocab, std::move(params)};
}

TokenId random_token(const Vocab& v, Rng& rng) {
  return static_cast<TokenId>(4 + rng.below(static_cast<std::size_t>(v.size() - 4)));
}

// A plain prompt q or a well-formed FAP built on it.
std::vector<TokenId> random_prompt(const Vocab& v, Rng& rng) {
  std::vector<TokenId> q;
  const int qlen = 1 + below(rng, 4);
  for (int i = 0; i < qlen; ++i) q.push_back(random_token(v, rng));
  if (rng.below(2) == 0) return q;
  q.push_back(Vocab::kSepAnswer);
  const int alen = below(rng, 4);
  for (int i = 0; i < alen; ++i) q.push_back(random_token(v, rng));
  q.push_back(Vocab::kSepFeedback);
  const int entries = below(rng, 3);
  for (int e = 0; e < entries; ++e) {
    q.push_back(v.id("fb"));
    if (rng.below(2) == 0) q.push_back(*v.position_token(below(rng, 3)));
    if (rng.below(2) == 0) q.push_back(random_token(v, rng));
  }
  q.push_back(Vocab::kSepEnd);
  return q;
}

std::vector<TokenId> random_prefix(const Vocab& v, Rng& rng) {
  std::vector<TokenId> p;
  const int len = below(rng, 5);
  for (int i = 0; i < len; ++i) p.push_back(random_token(v, rng));
  return p;
}

std::vector<Result> policy_results(const Options& opt) {
  std::vector<Result> out;

  out.push_back(
      Property("policy", "distribution sums to 1 within 1e-12", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 auto sp = small_policy(rng, uniform(rng, 0.1, 20.0));
                 const auto prompt = random_prompt(*sp.vocab, rng);
                 const auto prefix = random_prefix(*sp.vocab, rng);
                 const policy::Context ctx{prompt, prefix};
                 double sum = 0.0;
                 for (TokenId t = 0; t < sp.vocab->size(); ++t) sum += std::exp(sp.params.log_prob(ctx, t));
                 if (std::abs(sum - 1.0) > 1e-12) return fmt::format("sum = {:.17g}", sum);
                 return {};
               })
          .result());

  out.push_back(
      Property("policy", "log_prob_grad matches central differences (rel < 1e-6)", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 auto sp = small_policy(rng, 1.0);
                 const auto prompt = random_prompt(*sp.vocab, rng);
                 const auto prefix = random_prefix(*sp.vocab, rng);
                 const policy::Context ctx{prompt, prefix};
                 const TokenId tok = static_cast<TokenId>(rng.below(static_cast<std::size_t>(sp.vocab->size())));
                 const auto g = sp.params.log_prob_grad(ctx, tok);
                 std::vector<double> analytic(sp.params.num_params(), 0.0);
                 for (const auto& e : g.entries) analytic[e.index] += e.value;
                 const auto numeric = gradcheck::numeric_gradient(
                     sp.params, 1e-5,
                     [&](const policy::PolicyParams& p) { return p.log_prob(ctx, tok); });
                 const double rel = gradcheck::relative_error(analytic, numeric);
                 if (!(rel < 1e-6)) return fmt::format("relative error {:.3e}", rel);
                 return {};
               })
          .result());

  out.push_back(
      Property("policy", "snapshot unaffected by later updates", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 auto sp = small_policy(rng, 1.0);
                 const policy::PolicySnapshot snap(sp.params, 0);
                 const auto prompt = random_prompt(*sp.vocab, rng);
                 const auto prefix = random_prefix(*sp.vocab, rng);
                 const policy::Context ctx{prompt, prefix};
                 std::vector<double> before;
                 for (TokenId t = 0; t < sp.vocab->size(); ++t) before.push_back(snap.params().log_prob(ctx, t));
                 for (double& w : sp.params.mutable_weights()) w += rng.normal();
                 sp.params.set_temperature(uniform(rng, 0.5, 2.0));
                 for (TokenId t = 0; t < sp.vocab->size(); ++t) {
                   if (snap.params().log_prob(ctx, t) != before[static_cast<std::size_t>(t)]) {
                     return fmt::format("log_prob of token {} changed", t);
                   }
                 }
                 return {};
               })
          .result());

  out.push_back(
      Property("policy", "sample_rollout determined by (seed, snapshot, prompt)", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 auto sp = small_policy(rng, uniform(rng, 0.1, 3.0));
                 const policy::PolicySnapshot a(sp.params, 0), b(sp.params, 7);
                 const auto prompt = random_prompt(*sp.vocab, rng);
                 const std::uint64_t seed = rng.next();
                 const int max_len = 1 + below(rng, 8);
                 Rng ra(seed), rb(seed);
                 const auto x = sampling::sample_rollout(a, prompt, max_len, ra);
                 const auto y = sampling::sample_rollout(b, prompt, max_len, rb);
                 if (x.tokens != y.tokens || x.logprobs != y.logprobs || x.entropy_sum != y.entropy_sum) {
                   return "two draws differ";
                 }
                 return {};
               })
          .result());
  return out;
}

// ------------------------------------------------------------------ envs

bool same_report(const envs::VerifierReport& a, const envs::VerifierReport& b) {
  if (a.reward != b.reward || a.constraint_results.size() != b.constraint_results.size() ||
      a.violations.size() != b.violations.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.constraint_results.size(); ++i) {
    const auto &x = a.constraint_results[i], &y = b.constraint_results[i];
    if (x.constraint_id != y.constraint_id || x.cls != y.cls || x.passed != y.passed ||
        x.locus != y.locus) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.violations.size(); ++i) {
    const auto &x = a.violations[i], &y = b.violations[i];
    if (x.constraint_id != y.constraint_id || x.cls != y.cls || x.locus != y.locus ||
        x.tokens != y.tokens) {
      return false;
    }
  }
  return true;
}

// Answers that exercise every constraint: random slot values of a random
// length, or a satisfying-looking plan with a few slots perturbed.
std::vector<TokenId> random_plan(const envs::ConstraintPlanEnv& env, const envs::Task& task,
                                 Rng& rng) {
  const int len = env.plan_length(task.difficulty);
  const int num_values = env.config().num_values;
  std::vector<TokenId> a;
  int target = len;
  if (rng.below(4) == 0) target = std::max(0, len + below(rng, 3) - 1);
  for (int i = 0; i < target; ++i) a.push_back(env.value_token(below(rng, num_values)));
  for (const auto& c : task.constraints) {
    if (c.kind == envs::ConstraintKind::kRequiredValue && c.position < target && rng.below(3) != 0) {
      a[static_cast<std::size_t>(c.position)] = env.value_token(c.value);
    }
  }
  if (rng.below(8) != 0) a.push_back(Vocab::kEos);
  if (rng.below(16) == 0 && !a.empty()) a[rng.below(a.size())] = random_token(env.vocab(), rng);
  return a;
}

std::vector<TokenId> random_proof(const envs::GrammarProofEnv& env, const envs::Task& task,
                                  Rng& rng) {
  using Rule = envs::GrammarProofEnv::Rule;
  const Rule rules[] = {Rule::kInc, Rule::kDec, Rule::kDouble};
  std::vector<TokenId> a;
  if (rng.below(3) == 0) {
    // Shortest proof by brute force over rule sequences, when one is short.
    auto goal_spec = std::find_if(task.constraints.begin(), task.constraints.end(), [](const auto& c) {
      return c.kind == envs::ConstraintKind::kProofGoal;
    });
    const int start = goal_spec == task.constraints.end() ? 0 : goal_spec->value;
    const int goal = goal_spec == task.constraints.end() ? 0 : goal_spec->limit;
    const auto d = env.distance(start, goal);
    if (d && *d <= 4) {
      std::vector<int> digits(static_cast<std::size_t>(*d), 0);
      for (int code = 0; code < 81; ++code) {
        int c = code;
        int x = start;
        bool ok = true;
        for (int s = 0; s < *d; ++s) {
          digits[static_cast<std::size_t>(s)] = c % 3;
          c /= 3;
          const Rule r = rules[digits[static_cast<std::size_t>(s)]];
          x = r == Rule::kInc ? x + 1 : r == Rule::kDec ? x - 1 : 2 * x;
          if (x < 0 || x > env.config().max_number) ok = false;
        }
        if (ok && x == goal) {
          for (int s = 0; s < *d; ++s) a.push_back(env.rule_token(rules[digits[static_cast<std::size_t>(s)]]));
          a.push_back(env.qed());
          a.push_back(Vocab::kEos);
          return a;
        }
      }
    }
  }
  const int len = below(rng, env.config().max_steps + 2);
  for (int i = 0; i < len; ++i) a.push_back(env.rule_token(rules[rng.below(3)]));
  if (rng.below(4) != 0) a.push_back(env.qed());
  if (rng.below(6) != 0) a.push_back(Vocab::kEos);
  if (rng.below(10) == 0 && !a.empty()) a[rng.below(a.size())] = random_token(env.vocab(), rng);
  return a;
}

std::set<std::string> passed_set(const envs::VerifierReport& r) {
  std::set<std::string> s;
  for (const auto& c : r.constraint_results) {
    if (c.passed) s.insert(c.constraint_id);
  }
  return s;
}

bool strict_superset(const std::set<std::string>& a, const std::set<std::string>& b) {
  return a.size() > b.size() && std::includes(a.begin(), a.end(), b.begin(), b.end());
}

std::string feedback_matches(const envs::VerifierReport& r) {
  std::vector<std::pair<std::string, envs::ConstraintClass>> failed, reported;
  for (const auto& c : r.constraint_results) {
    if (!c.passed) failed.emplace_back(c.constraint_id, c.cls);
  }
  for (const auto& v : r.violations) reported.emplace_back(v.constraint_id, v.cls);
  std::sort(failed.begin(), failed.end());
  std::sort(reported.begin(), reported.end());
  if (failed != reported) {
    return fmt::format("{} failing constraints, {} violations", failed.size(), reported.size());
  }
  for (const auto& v : r.violations) {
    if (v.tokens.empty()) return fmt::format("violation {} has no tokens", v.constraint_id);
  }
  return {};
}

std::vector<Result> envs_results(const Options& opt) {
  std::vector<Result> out;
  const envs::ConstraintPlanEnv plan_env;
  const envs::GrammarProofEnv proof_env;
  const auto plan_tasks = plan_env.make_suite({10, 10, 10, opt.seed});
  const auto proof_tasks = proof_env.make_suite({10, 10, 10, opt.seed});

  out.push_back(
      Property("envs", "verify is pure (repeat call and fresh environment)", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int c) -> std::string {
                 if (c % 2 == 0) {
                   const auto& task = plan_tasks[rng.below(plan_tasks.size())];
                   const auto a = random_plan(plan_env, task, rng);
                   const envs::ConstraintPlanEnv fresh(plan_env.config());
                   if (!same_report(plan_env.verify(task, a), plan_env.verify(task, a)) ||
                       !same_report(plan_env.verify(task, a), fresh.verify(task, a))) {
                     return "constraint_plan reports differ";
                   }
                 } else {
                   const auto& task = proof_tasks[rng.below(proof_tasks.size())];
                   const auto a = random_proof(proof_env, task, rng);
                   const envs::GrammarProofEnv fresh(proof_env.config());
                   if (!same_report(proof_env.verify(task, a), proof_env.verify(task, a)) ||
                       !same_report(proof_env.verify(task, a), fresh.verify(task, a))) {
                     return "grammar_proof reports differ";
                   }
                 }
                 return {};
               })
          .result());

  int natural_pairs = 0;
  out.push_back(
      Property("envs", "constraint_plan reward monotone in passed set", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto& task = plan_tasks[rng.below(plan_tasks.size())];
                 // Synthetic pass sets B strictly inside A.
                 std::vector<envs::ConstraintResult> ra, rb;
                 for (const auto& c : task.constraints) {
                   const bool pa = rng.below(2) == 0;
                   ra.push_back({c.id, c.cls, pa, std::nullopt});
                   rb.push_back({c.id, c.cls, pa && rng.below(2) == 0, std::nullopt});
                 }
                 const auto k = rng.below(ra.size());
                 ra[k].passed = true;
                 rb[k].passed = false;
                 const double a = plan_env.reward(task, ra), b = plan_env.reward(task, rb);
                 if (a < b) return fmt::format("synthetic: reward(A) {} < reward(B) {}", a, b);
                 // Sampled answer pairs differing in one slot.
                 auto x = random_plan(plan_env, task, rng);
                 auto y = x;
                 if (!y.empty()) {
                   y[rng.below(y.size())] = plan_env.value_token(below(rng, plan_env.config().num_values));
                 }
                 const auto rx = plan_env.verify(task, x), ry = plan_env.verify(task, y);
                 const auto px = passed_set(rx), py = passed_set(ry);
                 if (strict_superset(px, py) || strict_superset(py, px)) ++natural_pairs;
                 if (strict_superset(px, py) && rx.reward < ry.reward) return "sampled pair violates order";
                 if (strict_superset(py, px) && ry.reward < rx.reward) return "sampled pair violates order";
                 return {};
               })
          .require(natural_pairs > 0, "no sampled answer pair had nested pass sets")
          .result());

  out.push_back(
      Property("envs", "feedback lists exactly the failing constraints", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int c) -> std::string {
                 if (c % 2 == 0) {
                   const auto& task = plan_tasks[rng.below(plan_tasks.size())];
                   return feedback_matches(plan_env.verify(task, random_plan(plan_env, task, rng)));
                 }
                 const auto& task = proof_tasks[rng.below(proof_tasks.size())];
                 return feedback_matches(proof_env.verify(task, random_proof(proof_env, task, rng)));
               })
          .result());

  std::set<double> seen;
  out.push_back(
      Property("envs", "grammar_proof reward is exactly {-1, 0, +1}", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto& task = proof_tasks[rng.below(proof_tasks.size())];
                 const double r = proof_env.verify(task, random_proof(proof_env, task, rng)).reward;
                 if (r != -1.0 && r != 0.0 && r != 1.0) return fmt::format("reward {}", r);
                 seen.insert(r);
                 return {};
               })
          .require(seen.size() == 3, "not every reward value was observed")
          .result());
  return out;
}

// -------------------------------------------------------------- sampling

policy::PolicyParams random_env_policy(const envs::Environment& env, Rng& rng) {
  auto p = rng.below(2) == 0 ? policy::PolicyParams::linear_bag(env.vocab_ptr())
                             : policy::PolicyParams::tabular(env.vocab_ptr(), 2);
  const double scale = uniform(rng, 0.0, 2.0);
  for (double& w : p.mutable_weights()) w = scale * rng.normal();
  return p;
}

bool same_rollout(const sampling::Rollout& a, const sampling::Rollout& b) {
  return a.origin == b.origin && a.conditioning_prompt == b.conditioning_prompt &&
         a.index == b.index && a.child == b.child && a.parent_index == b.parent_index &&
         a.tokens == b.tokens && a.behavior_logprobs == b.behavior_logprobs &&
         a.entropy_sum == b.entropy_sum && same_report(a.report, b.report);
}

bool same_batch(const sampling::StepBatch& a, const sampling::StepBatch& b) {
  if (a.n != b.n || a.k != b.k || a.initial_rollouts.size() != b.initial_rollouts.size() ||
      a.fap_rollouts.size() != b.fap_rollouts.size() || a.faps.size() != b.faps.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.initial_rollouts.size(); ++i) {
    if (!same_rollout(a.initial_rollouts[i], b.initial_rollouts[i])) return false;
  }
  for (std::size_t i = 0; i < a.fap_rollouts.size(); ++i) {
    if (!same_rollout(a.fap_rollouts[i], b.fap_rollouts[i])) return false;
  }
  for (std::size_t i = 0; i < a.faps.size(); ++i) {
    if (a.faps[i].assembled != b.faps[i].assembled) return false;
  }
  return true;
}

std::vector<Result> sampling_results(const Options& opt) {
  std::vector<Result> out;
  const envs::ConstraintPlanEnv env;
  const auto tasks = env.make_suite({5, 5, 5, opt.seed});
  sampling::SamplingConfig cfg;
  cfg.max_answer_len = env.max_answer_len();

  out.push_back(
      Property("sampling", "every task consumes n + n*k rollouts", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto params = random_env_policy(env, rng);
                 const policy::PolicySnapshot snap(params, 0);
                 const int n = 1 + below(rng, 8), k = 1 + below(rng, 8);
                 const auto& task = tasks[rng.below(tasks.size())];
                 const auto key = sampling::StreamKey::make(rng.next(), rng.below(100), task.id);
                 const auto b = sampling::sample_step_batch(snap, env, task, n, k, key, cfg);
                 b.check();
                 const int total = static_cast<int>(b.initial_rollouts.size() + b.fap_rollouts.size());
                 if (total != n + n * k) return fmt::format("{} rollouts for n={} k={}", total, n, k);
                 return {};
               })
          .result());

  out.push_back(
      Property("sampling", "ECC groups partition second round; EPA = all", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto params = random_env_policy(env, rng);
                 const policy::PolicySnapshot snap(params, 0);
                 const int n = 1 + below(rng, 8), k = 1 + below(rng, 8);
                 const auto& task = tasks[rng.below(tasks.size())];
                 const auto key = sampling::StreamKey::make(rng.next(), 0, task.id);
                 const auto b = sampling::sample_step_batch(snap, env, task, n, k, key, cfg);
                 const auto g = sampling::assemble_groups(b);
                 if (static_cast<int>(g.ecc.size()) != n) return "one ECC group per FAP expected";
                 std::multiset<const sampling::Rollout*> ecc_members, second_round, epa, all;
                 for (std::size_t i = 0; i < g.ecc.size(); ++i) {
                   if (static_cast<int>(g.ecc[i].size()) != k) return "ECC group size != k";
                   for (const auto* r : g.ecc[i].members) {
                     if (r->parent_index != static_cast<int>(i)) return "ECC member from another FAP";
                     ecc_members.insert(r);
                   }
                 }
                 for (const auto& r : b.fap_rollouts) second_round.insert(&r);
                 for (const auto& r : b.initial_rollouts) all.insert(&r);
                 all.insert(second_round.begin(), second_round.end());
                 for (const auto* r : g.epa.members) epa.insert(r);
                 if (ecc_members != second_round) return "ECC groups do not partition the second round";
                 if (epa != all) return "EPA group != initial + second round";
                 return {};
               })
          .result());

  out.push_back(
      Property("sampling", "StepBatch is a function of (seed, step, task, snapshot)", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto params = random_env_policy(env, rng);
                 const auto copy = params;
                 const policy::PolicySnapshot s1(params, 0), s2(copy, 0);
                 const int n = 1 + below(rng, 4), k = 1 + below(rng, 4);
                 const auto& task = tasks[rng.below(tasks.size())];
                 const std::uint64_t seed = rng.next(), step = rng.below(1000);
                 const auto a = sampling::sample_step_batch(
                     s1, env, task, n, k, sampling::StreamKey::make(seed, step, task.id), cfg);
                 const auto b = sampling::sample_step_batch(
                     s2, env, task, n, k, sampling::StreamKey::make(seed, step, task.id), cfg);
                 if (!same_batch(a, b)) return "identical inputs gave different batches";
                 return {};
               })
          .result());
  return out;
}

// ------------------------------------------------------------ objectives

std::vector<Result> objectives_results(const Options& opt) {
  std::vector<Result> out;

  out.push_back(
      Property("objectives", "group advantages sum to 0 within 1e-9", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const int size = 1 + below(rng, 80);
                 std::vector<double> r(static_cast<std::size_t>(size));
                 const int kind = below(rng, 3);
                 for (double& x : r) {
                   x = kind == 0 ? rng.normal() * uniform(rng, 0.0, 100.0)
                       : kind == 1 ? static_cast<double>(below(rng, 3)) - 1.0
                                   : uniform(rng, 0.0, 1.0);
                 }
                 const double eps = rng.below(2) == 0 ? 1e-6 : uniform(rng, 0.0, 1.0);
                 const auto a = objectives::group_advantages(r, eps);
                 double sum = 0.0;
                 for (double v : a.values) sum += v;
                 if (std::abs(sum) > 1e-9) return fmt::format("sum {:.3e}", sum);
                 return {};
               })
          .result());

  out.push_back(
      Property("objectives", "reweight increasing, in [0,1), f'(0)=1/c, f<rho iff rho>1-c",
               opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const double c = rng.below(2) == 0 ? 0.1 : uniform(rng, 0.01, 2.0);
                 const double a = std::exp(uniform(rng, -12.0, 6.0)) * (rng.below(10) == 0 ? 0.0 : 1.0);
                 const double b = a + std::exp(uniform(rng, -10.0, 3.0));
                 const double fa = objectives::reweight(a, c), fb = objectives::reweight(b, c);
                 if (!(fa < fb)) return fmt::format("f({}) = {} >= f({}) = {}", a, fa, b, fb);
                 if (!(fa >= 0.0 && fa < 1.0)) return fmt::format("f({}) = {} outside [0,1)", a, fa);
                 if (std::abs(objectives::reweight_derivative(0.0, c) - 1.0 / c) > 1e-12 / c) {
                   return "f'(0) != 1/c";
                 }
                 const double rho = uniform(rng, 0.0, 3.0);
                 if (std::abs(rho - (1.0 - c)) > 1e-9 &&
                     (objectives::reweight(rho, c) < rho) != (rho > 1.0 - c)) {
                   return fmt::format("f(rho) < rho disagrees with rho > 1 - c at rho = {}", rho);
                 }
                 return {};
               })
          .require(std::abs(objectives::reweight_derivative(0.0, 0.1) - 10.0) < 1e-12, "f'(0) != 10 at c = 0.1")
          .result());

  out.push_back(
      Property("objectives", "clipped term equals brute-force min of both branches", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const double eps = uniform(rng, 0.01, 0.9);
                 const double ratio = std::exp(uniform(rng, -3.0, 3.0));
                 const double adv = rng.normal() * 3.0;
                 const double plain = ratio * adv;
                 const double lo = 1.0 - eps, hi = 1.0 + eps;
                 const double clipped = (ratio < lo ? lo : ratio > hi ? hi : ratio) * adv;
                 const double expect = plain < clipped ? plain : clipped;
                 if (objectives::clipped_term(ratio, adv, eps) != expect) return "branch mismatch";
                 return {};
               })
          .result());

  // Loss values recomputed token by token from scratch.
  out.push_back(
      Property("objectives", "EPA and ECC loss values match a brute-force recomputation",
               opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto inst = gradcheck::make_instance(rng.next());
                 const objectives::ClipConfig clip;
                 const auto& q = inst.task->prompt;
                 auto term = [&](const sampling::Rollout& r, std::span<const TokenId> target,
                                 bool reweighted, double adv) {
                   double s = 0.0;
                   for (std::size_t t = 0; t < r.tokens.size(); ++t) {
                     const policy::Context ctx{target, std::span<const TokenId>(r.tokens).first(t)};
                     const double rho = std::exp(inst.theta.log_prob(ctx, r.tokens[t]) - r.behavior_logprobs[t]);
                     const double g = reweighted ? rho / (rho + clip.reweight_c) : rho;
                     const double gc = std::clamp(g, 1.0 - clip.epsilon, 1.0 + clip.epsilon);
                     s += std::min(g * adv, gc * adv);
                   }
                   return s / static_cast<double>(r.tokens.size());
                 };
                 const auto& b = inst.batch;
                 double epa = 0.0;
                 for (int i = 0; i < b.n; ++i) epa -= term(b.initial_rollouts[i], q, false, inst.epa_adv.values[i]);
                 for (int i = 0; i < b.n * b.k; ++i) {
                   epa -= term(b.fap_rollouts[i], q, true, inst.epa_adv.values[b.n + i]);
                 }
                 epa /= b.total();
                 double ecc = 0.0;
                 for (std::size_t g = 0; g < inst.groups.ecc.size(); ++g) {
                   const auto& members = inst.groups.ecc[g].members;
                   double s = 0.0;
                   for (std::size_t j = 0; j < members.size(); ++j) {
                     s -= term(*members[j], members[j]->conditioning_prompt, false, inst.ecc_advs[g].values[j]);
                   }
                   ecc += s / static_cast<double>(members.size());
                 }
                 ecc /= static_cast<double>(inst.groups.ecc.size());
                 const double got_epa = objectives::epa_loss(inst.theta, b, inst.epa_adv, clip).loss;
                 const double got_ecc = objectives::ecc_loss(inst.theta, inst.groups.ecc, inst.ecc_advs, clip).loss;
                 if (std::abs(got_epa - epa) > 1e-12 * std::max(1.0, std::abs(epa))) {
                   return fmt::format("EPA {} vs {}", got_epa, epa);
                 }
                 if (std::abs(got_ecc - ecc) > 1e-12 * std::max(1.0, std::abs(ecc))) {
                   return fmt::format("ECC {} vs {}", got_ecc, ecc);
                 }
                 return {};
               })
          .result());

  {
    gradcheck::Config gc;
    gc.seed = derive_seed({opt.seed, 0x6763});
    gc.instances = opt.cases;
    const auto report = gradcheck::run(gc);
    Result r{"objectives", "EPA/ECC gradients match central differences (rel < 1e-5)",
             static_cast<int>(report.results.size()), report.passed(), {}};
    if (!r.passed) {
      r.detail = fmt::format("max relative error {:.3e}; first failing seed {}",
                             report.max_rel_error(), report.failing_seeds().front());
    }
    out.push_back(r);
  }

  int changed = 0;
  out.push_back(
      Property("objectives", "identity reweight changes only the EPA FAP term", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 const auto inst = gradcheck::make_instance(rng.next());
                 objectives::ClipConfig def, ident;
                 ident.reweight = objectives::Reweight::kIdentity;
                 const auto a = objectives::epa_loss(inst.theta, inst.batch, inst.epa_adv, def);
                 const auto b = objectives::epa_loss(inst.theta, inst.batch, inst.epa_adv, ident);
                 const auto n = static_cast<std::size_t>(inst.batch.n);
                 for (std::size_t i = 0; i < n; ++i) {
                   if (a.rollout_loss[i] != b.rollout_loss[i]) return "EPA init term changed";
                 }
                 bool fap_differs = false, positive = false;
                 for (std::size_t i = n; i < a.rollout_loss.size(); ++i) {
                   fap_differs = fap_differs || a.rollout_loss[i] != b.rollout_loss[i];
                   positive = positive || inst.epa_adv.values[i] > 0.0;
                 }
                 if (positive && !fap_differs) return "EPA FAP term unchanged despite positive advantages";
                 changed += fap_differs;
                 const auto ea = objectives::ecc_loss(inst.theta, inst.groups.ecc, inst.ecc_advs, def);
                 const auto eb = objectives::ecc_loss(inst.theta, inst.groups.ecc, inst.ecc_advs, ident);
                 if (ea.loss != eb.loss || ea.grad != eb.grad) return "ECC loss changed";
                 return {};
               })
          .require(changed > 0, "the FAP term never changed")
          .result());

  int nonzero_grad = 0;
  out.push_back(
      Property("objectives", "ECC loss is 0 at theta = theta_old (gradient nonzero)", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 auto inst = gradcheck::make_instance(rng.next());
                 // Rewind theta to the behavior parameters: rescore the stored
                 // log-probs with theta itself.
                 for (auto* rs : {&inst.batch.initial_rollouts, &inst.batch.fap_rollouts}) {
                   for (auto& r : *rs) {
                     for (std::size_t t = 0; t < r.tokens.size(); ++t) {
                       const policy::Context ctx{r.conditioning_prompt,
                                                 std::span<const TokenId>(r.tokens).first(t)};
                       r.behavior_logprobs[t] = inst.theta.log_prob(ctx, r.tokens[t]);
                     }
                   }
                 }
                 const auto groups = sampling::assemble_groups(inst.batch);
                 const auto rep = objectives::ecc_loss(inst.theta, groups.ecc, inst.ecc_advs, {});
                 if (std::abs(rep.loss) > 1e-12) return fmt::format("ECC loss {:.3e}", rep.loss);
                 for (std::size_t g = 0; g < groups.ecc.size(); ++g) {
                   for (const auto* m : groups.ecc[g].members) {
                     for (std::size_t t = 0; t < m->tokens.size(); ++t) {
                       const double rho = objectives::ratio_ecc(inst.theta, inst.theta, m->conditioning_prompt, m->tokens, t);
                       if (rho != 1.0) return fmt::format("rho~ = {:.17g}", rho);
                     }
                   }
                 }
                 double mx = 0.0;
                 for (double x : rep.grad) mx = std::max(mx, std::abs(x));
                 nonzero_grad += mx > 1e-9;
                 return {};
               })
          .require(nonzero_grad > 0, "ECC gradient was zero on every instance")
          .result());
  return out;
}

// --------------------------------------------------------------- trainer

trainer::TrainConfig small_train_config(Rng& rng, const envs::Environment& env) {
  trainer::TrainConfig cfg;
  cfg.n = 1 + below(rng, 4);
  cfg.k = 1 + below(rng, 4);
  cfg.steps = 2;
  cfg.tasks_per_step = 1 + below(rng, 3);
  cfg.seed = rng.next();
  cfg.optimizer.learning_rate = uniform(rng, 0.1, 5.0);
  cfg.sampling.max_answer_len = env.max_answer_len();
  return cfg;
}

std::vector<Result> trainer_results(const Options& opt) {
  std::vector<Result> out;
  const envs::ConstraintPlanEnv env;
  const auto suite = env.make_suite({3, 3, 3, opt.seed});

  out.push_back(
      Property("trainer", "all methods sample the same rollouts; update counts 2/1", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 auto cfg = small_train_config(rng, env);
                 std::optional<std::uint64_t> rollouts;
                 for (trainer::Method m : trainer::kAllMethods) {
                   cfg.method = m;
                   auto state = trainer::make_state(cfg, env.vocab_ptr());
                   for (int s = 0; s < cfg.steps; ++s) {
                     const auto tasks = trainer::tasks_for_step(suite, s, cfg.tasks_per_step);
                     const auto metrics = trainer::train_step(state, env, tasks, cfg);
                     if (metrics.updates != trainer::updates_per_step(m)) return "per-step update count";
                   }
                   const int expect_updates =
                       (m == trainer::Method::kFbos || m == trainer::Method::kGrpoExtraUpdate) ? 2 : 1;
                   if (state.updates_applied != static_cast<std::uint64_t>(expect_updates * cfg.steps)) {
                     return fmt::format("{}: {} updates", trainer::to_string(m), state.updates_applied);
                   }
                   const auto expect_rollouts = static_cast<std::uint64_t>(
                       cfg.steps * cfg.tasks_per_step * (cfg.n + cfg.n * cfg.k));
                   if (state.rollouts_sampled != expect_rollouts) return "rollout counter off budget";
                   if (rollouts && *rollouts != state.rollouts_sampled) return "methods differ in rollouts";
                   rollouts = state.rollouts_sampled;
                 }
                 return {};
               })
          .result());

  int distinguishable = 0;
  out.push_back(
      Property("trainer", "both fbos updates use the step's theta_old snapshot", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 auto cfg = small_train_config(rng, env);
                 cfg.method = trainer::Method::kFbos;
                 cfg.tasks_per_step = 1;
                 auto state = trainer::make_state(cfg, env.vocab_ptr());
                 for (double& w : state.params.mutable_weights()) w = 0.5 * rng.normal();
                 const policy::PolicyParams theta_old = state.params;
                 std::optional<sampling::StepBatch> seen;
                 const auto tasks = trainer::tasks_for_step(suite, below(rng, 9), 1);
                 trainer::train_step(state, env, tasks, cfg,
                                     [&](const sampling::StepBatch& b) { seen = b; });
                 if (!seen) return "observer not called";
                 for (const auto* rs : {&seen->initial_rollouts, &seen->fap_rollouts}) {
                   for (const auto& r : *rs) {
                     for (std::size_t t = 0; t < r.tokens.size(); ++t) {
                       const policy::Context ctx{r.conditioning_prompt,
                                                 std::span<const TokenId>(r.tokens).first(t)};
                       if (std::abs(theta_old.log_prob(ctx, r.tokens[t]) - r.behavior_logprobs[t]) > 1e-12) {
                         return "behavior log-prob not from theta_old";
                       }
                     }
                   }
                 }
                 // Replay: EPA at theta_old, then ECC at theta_1 against the
                 // stored theta_old log-probs.
                 const auto groups = sampling::assemble_groups(*seen);
                 const auto epa_rewards = groups.epa.rewards();
                 const auto epa_adv = objectives::group_advantages(epa_rewards, cfg.eps_adv);
                 std::vector<objectives::AdvantageSet> advs;
                 for (const auto& g : groups.ecc) {
                   const auto r = g.rewards();
                   advs.push_back(objectives::group_advantages(r, cfg.eps_adv));
                 }
                 const double lr = cfg.optimizer.learning_rate;
                 policy::PolicyParams theta1 = theta_old;
                 const auto g1 = objectives::epa_loss(theta_old, *seen, epa_adv, cfg.clip).grad;
                 for (std::size_t i = 0; i < g1.size(); ++i) theta1.mutable_weights()[i] -= lr * g1[i];
                 auto expect = theta1;
                 const auto g2 = objectives::ecc_loss(theta1, groups.ecc, advs, cfg.clip).grad;
                 for (std::size_t i = 0; i < g2.size(); ++i) expect.mutable_weights()[i] -= lr * g2[i];
                 double diff = 0.0;
                 for (std::size_t i = 0; i < g2.size(); ++i) {
                   diff = std::max(diff, std::abs(expect.weights()[i] - state.params.weights()[i]));
                 }
                 if (diff > 1e-10) return fmt::format("replay differs by {:.3e}", diff);
                 // The wrong discipline (denominators from theta_1) is
                 // detectably different.
                 auto stale = *seen;
                 for (auto& r : stale.fap_rollouts) {
                   for (std::size_t t = 0; t < r.tokens.size(); ++t) {
                     const policy::Context ctx{r.conditioning_prompt,
                                               std::span<const TokenId>(r.tokens).first(t)};
                     r.behavior_logprobs[t] = theta1.log_prob(ctx, r.tokens[t]);
                   }
                 }
                 const auto stale_groups = sampling::assemble_groups(stale);
                 const auto g3 = objectives::ecc_loss(theta1, stale_groups.ecc, advs, cfg.clip).grad;
                 double alt = 0.0;
                 for (std::size_t i = 0; i < g3.size(); ++i) alt = std::max(alt, std::abs(lr * (g3[i] - g2[i])));
                 distinguishable += alt > 1e-8;
                 return {};
               })
          .require(distinguishable > 0, "replay could not tell the snapshot disciplines apart")
          .result());

  out.push_back(
      Property("trainer", "every step emits a complete StepMetrics row", opt.seed)
          .run(opt.cases,
               [&](Rng& rng, int) -> std::string {
                 auto cfg = small_train_config(rng, env);
                 for (trainer::Method m : trainer::kAllMethods) {
                   cfg.method = m;
                   auto state = trainer::make_state(cfg, env.vocab_ptr());
                   const auto tasks = trainer::tasks_for_step(suite, 0, cfg.tasks_per_step);
                   const auto s = trainer::train_step(state, env, tasks, cfg);
                   const bool fb = trainer::uses_feedback(m);
                   const bool epa = m == trainer::Method::kFbos || m == trainer::Method::kFbosWoEcc;
                   const bool ecc = m == trainer::Method::kFbos || m == trainer::Method::kFbosWoEpa;
                   const bool grpo = !fb;
                   auto finite = [](double x) { return std::isfinite(x); };
                   if (s.step != 1 || s.method != m || s.rollouts == 0 || s.cumulative_rollouts != s.rollouts ||
                       !finite(s.train_score_mean) || !finite(s.train_score_std) ||
                       !finite(s.init_score_mean) || !finite(s.entropy) || !finite(s.grad_norm)) {
                     return fmt::format("{}: core field missing", trainer::to_string(m));
                   }
                   if (s.fap_score_mean.has_value() != fb || s.fap_score_std.has_value() != fb ||
                       s.fap_score_max.has_value() != fb || s.epa_loss.has_value() != epa ||
                       s.epa_clip_fraction.has_value() != epa || s.ecc_loss.has_value() != ecc ||
                       s.ecc_clip_fraction.has_value() != ecc || s.grpo_loss.has_value() != grpo ||
                       s.grpo_clip_fraction.has_value() != grpo) {
                     return fmt::format("{}: optional field presence", trainer::to_string(m));
                   }
                   int tasks_seen = 0;
                   for (const auto& d : s.by_difficulty) {
                     tasks_seen += d.tasks;
                     if (d.tasks > 0 && (!d.train_score_mean || !d.train_score_std ||
                                         d.fap_score_mean.has_value() != fb)) {
                       return "difficulty breakdown incomplete";
                     }
                   }
                   if (tasks_seen != cfg.tasks_per_step) return "difficulty task counts";
                 }
                 return {};
               })
          .result());
  return out;
}

// --------------------------------------------------------------- metrics

std::vector<metrics::EvaluatedPlan> random_plans(Rng& rng, bool equal_counts) {
  std::vector<metrics::EvaluatedPlan> plans(static_cast<std::size_t>(1 + below(rng, 12)));
  const int hard = below(rng, 6), common = below(rng, 6);
  for (auto& p : plans) {
    const int h = equal_counts ? hard : below(rng, 6);
    const int c = equal_counts ? common : below(rng, 6);
    const double pass_p = rng.uniform();
    for (int i = 0; i < h; ++i) p.constraint_results.push_back({envs::ConstraintClass::kHard, rng.uniform() < pass_p});
    for (int i = 0; i < c; ++i) {
      p.constraint_results.push_back({envs::ConstraintClass::kCommonsense, rng.uniform() < pass_p});
    }
    p.refresh();
    p.score = static_cast<double>(below(rng, 3)) - 1.0;
  }
  return plans;
}

int class_count(const std::vector<metrics::EvaluatedPlan>& plans, envs::ConstraintClass cls) {
  int n = 0;
  for (const auto& p : plans) {
    for (const auto& c : p.constraint_results) n += c.cls == cls;
  }
  return n;
}

std::vector<Result> metrics_results(const Options& opt) {
  using envs::ConstraintClass;
  std::vector<Result> out;

  out.push_back(
      Property("metrics", "final pass rate <= macro rate of each class", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const auto plans = random_plans(rng, false);
                 const double f = metrics::final_pass_rate(plans);
                 for (auto cls : {ConstraintClass::kHard, ConstraintClass::kCommonsense}) {
                   if (f > metrics::macro_pass_rate(plans, cls)) return "final > macro";
                 }
                 return {};
               })
          .result());

  out.push_back(
      Property("metrics", "macro <= micro with equal per-plan counts", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const auto plans = random_plans(rng, true);
                 for (auto cls : {ConstraintClass::kHard, ConstraintClass::kCommonsense}) {
                   if (class_count(plans, cls) == 0) continue;
                   const double macro = metrics::macro_pass_rate(plans, cls);
                   const double micro = metrics::micro_pass_rate(plans, cls);
                   if (macro > micro + 1e-12) return fmt::format("macro {} > micro {}", macro, micro);
                 }
                 return {};
               })
          .result());

  {
    // Unequal counts break the ordering: 1/1 and 0/100 passed.
    std::vector<metrics::EvaluatedPlan> plans(2);
    plans[0].constraint_results.push_back({ConstraintClass::kHard, true});
    for (int i = 0; i < 100; ++i) plans[1].constraint_results.push_back({ConstraintClass::kHard, false});
    for (auto& p : plans) p.refresh();
    const double micro = metrics::micro_pass_rate(plans, ConstraintClass::kHard);
    const double macro = metrics::macro_pass_rate(plans, ConstraintClass::kHard);
    Result r{"metrics", "unequal counts counterexample (micro 1/101, macro 1/2)", 1,
             std::abs(micro - 1.0 / 101.0) < 1e-12 && std::abs(macro - 0.5) < 1e-12 && macro > micro,
             {}};
    if (!r.passed) r.detail = fmt::format("micro {} macro {}", micro, macro);
    out.push_back(r);
  }

  out.push_back(
      Property("metrics", "rates in [0,1], avg score in [-1,1]", opt.seed)
          .run(opt.cases,
               [](Rng& rng, int) -> std::string {
                 const auto plans = random_plans(rng, rng.below(2) == 0);
                 const auto s = metrics::summarize(plans);
                 auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
                 if (!unit(s.commonsense_macro) || !unit(s.hard_macro) || !unit(s.final_pass_rate) ||
                     (s.commonsense_micro && !unit(*s.commonsense_micro)) ||
                     (s.hard_micro && !unit(*s.hard_micro))) {
                   return "rate outside [0,1]";
                 }
                 if (s.avg_score < -1.0 || s.avg_score > 1.0) return "avg score outside [-1,1]";
                 return {};
               })
          .result());
  return out;
}

// --------------------------------------------------------------- harness

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Result> harness_results(const Options& opt) {
  std::vector<Result> out;
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() /
                        fmt::format("fbos-invariants-{:016x}", derive_seed({opt.seed, 0x68617273}));
  fs::remove_all(root);

  config::ExperimentConfig cfg;
  cfg.name = "invariant-smoke";
  cfg.seed = opt.seed;
  cfg.train_suite = {2, 2, 2, opt.seed};
  cfg.validation_suite = {1, 1, 2, opt.seed + 1};
  cfg.repeats = 2;
  cfg.eval = {2, 2};
  cfg.train.n = 2;
  cfg.train.k = 2;
  cfg.train.steps = 3;
  cfg.train.tasks_per_step = 2;
  cfg.train.optimizer.learning_rate = 1.0;
  const std::vector<std::string> files = {"metrics.csv", "eval.csv", "train_difficulty.csv",
                                          "summary.csv"};

  Result repro{"cli-harness", "same config twice gives byte-identical CSVs", 0, true, {}};
  Result schema{"cli-harness", "CSV artifacts carry versioned schema lines", 0, true, {}};
  Result families{"cli-harness", "every figure family has an emitted curve", 0, true, {}};
  try {
    for (const char* run : {"a", "b"}) {
      cfg.output_dir = (root / run).string();
      experiment::train_to_directory(cfg);
    }
    for (const auto& f : files) {
      ++repro.cases;
      if (read_file(root / "a" / f) != read_file(root / "b" / f)) {
        repro.passed = false;
        repro.detail = f + " differs";
        break;
      }
    }
    const std::pair<std::string, std::string_view> schemas[] = {
        {"metrics.csv", experiment::kMetricsSchema},
        {"eval.csv", experiment::kEvalSchema},
        {"train_difficulty.csv", experiment::kDifficultySchema},
        {"summary.csv", experiment::kSummarySchema}};
    for (const auto& [f, s] : schemas) {
      ++schema.cases;
      std::ifstream in(root / "a" / f);
      std::string first;
      std::getline(in, first);
      if (first != fmt::format("# {}", s)) {
        schema.passed = false;
        schema.detail = fmt::format("{} starts with '{}'", f, first);
        break;
      }
    }
    const auto cmp = compare::load_runs({root / "a"});
    const std::pair<const char*, const char*> needed[] = {
        {"final_pass_rate", "all"},   {"final_pass_rate", "easy"},   {"final_pass_rate", "medium"},
        {"final_pass_rate", "hard"},  {"commonsense_micro", "all"},  {"commonsense_macro", "all"},
        {"hard_micro", "all"},        {"hard_macro", "all"},         {"entropy", "train"},
        {"grad_norm", "train"},       {"train_score_mean", "train"}, {"train_score_std", "train"},
        {"fap_score_mean", "train"},  {"fap_score_std", "train"},    {"fap_score_max", "train"},
    };
    for (const auto& [curve, split] : needed) {
      ++families.cases;
      const auto* pts = cmp.find("fbos", curve, split);
      if (!pts || pts->empty()) {
        families.passed = false;
        families.detail = fmt::format("no fbos curve {} ({})", curve, split);
        break;
      }
    }
  } catch (const std::exception& e) {
    for (Result* r : {&repro, &schema, &families}) {
      if (r->passed) {
        r->passed = false;
        r->detail = fmt::format("exception: {}", e.what());
      }
    }
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  out.push_back(repro);
  out.push_back(schema);
  out.push_back(families);
  return out;
}

}  // namespace

std::vector<Result> check_policy(const Options& opt) { return policy_results(opt); }
std::vector<Result> check_envs(const Options& opt) { return envs_results(opt); }
std::vector<Result> check_sampling(const Options& opt) { return sampling_results(opt); }
std::vector<Result> check_objectives(const Options& opt) { return objectives_results(opt); }
std::vector<Result> check_trainer(const Options& opt) { return trainer_results(opt); }
std::vector<Result> check_metrics(const Options& opt) { return metrics_results(opt); }
std::vector<Result> check_harness(const Options& opt) { return harness_results(opt); }

std::vector<Result> run_all(const Options& opt) {
  std::vector<Result> all;
  for (auto* f : {&check_policy, &check_envs, &check_sampling, &check_objectives, &check_trainer,
                  &check_metrics, &check_harness}) {
    auto part = (*f)(opt);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

}  // namespace fbos::invariants
