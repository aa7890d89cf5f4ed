#include "fbos/metrics.hpp"

#include <stdexcept>

namespace fbos::metrics {

EvaluatedPlan EvaluatedPlan::from_report(const envs::Task& task,
                                         const envs::VerifierReport& report) {
  EvaluatedPlan p;
  p.task_id = task.id;
  p.difficulty = task.difficulty;
  p.score = report.reward;
  p.constraint_results.reserve(report.constraint_results.size());
  for (const auto& r : report.constraint_results) p.constraint_results.push_back({r.cls, r.passed});
  p.refresh();
  return p;
}

void EvaluatedPlan::refresh() {
  final_pass = true;
  for (const auto& c : constraint_results) final_pass = final_pass && c.passed;
}

double micro_pass_rate(std::span<const EvaluatedPlan> plans, envs::ConstraintClass cls) {
  std::size_t passed = 0, total = 0;
  for (const auto& p : plans) {
    for (const auto& c : p.constraint_results) {
      if (c.cls != cls) continue;
      ++total;
      passed += c.passed ? 1 : 0;
    }
  }
  if (total == 0) throw std::domain_error("micro_pass_rate: no constraints of this class");
  return static_cast<double>(passed) / static_cast<double>(total);
}

double macro_pass_rate(std::span<const EvaluatedPlan> plans, envs::ConstraintClass cls) {
  if (plans.empty()) throw std::domain_error("macro_pass_rate: no plans");
  std::size_t satisfied = 0;
  for (const auto& p : plans) {
    bool ok = true;
    for (const auto& c : p.constraint_results) {
      if (c.cls == cls && !c.passed) ok = false;
    }
    satisfied += ok ? 1 : 0;
  }
  return static_cast<double>(satisfied) / static_cast<double>(plans.size());
}

double final_pass_rate(std::span<const EvaluatedPlan> plans) {
  if (plans.empty()) throw std::domain_error("final_pass_rate: no plans");
  std::size_t n = 0;
  for (const auto& p : plans) n += p.final_pass ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(plans.size());
}

double avg_score(std::span<const double> scores) {
  if (scores.empty()) throw std::domain_error("avg_score: no scores");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

namespace {

std::optional<double> micro_or_none(std::span<const EvaluatedPlan> plans,
                                    envs::ConstraintClass cls) {
  for (const auto& p : plans) {
    for (const auto& c : p.constraint_results) {
      if (c.cls == cls) return micro_pass_rate(plans, cls);
    }
  }
  return std::nullopt;
}

}  // namespace

RateSet summarize(std::span<const EvaluatedPlan> plans) {
  RateSet r;
  r.plans = static_cast<int>(plans.size());
  r.commonsense_micro = micro_or_none(plans, envs::ConstraintClass::kCommonsense);
  r.commonsense_macro = macro_pass_rate(plans, envs::ConstraintClass::kCommonsense);
  r.hard_micro = micro_or_none(plans, envs::ConstraintClass::kHard);
  r.hard_macro = macro_pass_rate(plans, envs::ConstraintClass::kHard);
  r.final_pass_rate = final_pass_rate(plans);
  std::vector<double> scores;
  scores.reserve(plans.size());
  for (const auto& p : plans) scores.push_back(p.score);
  r.avg_score = avg_score(scores);
  return r;
}

EvalSummary summarize_by_difficulty(std::span<const EvaluatedPlan> plans) {
  EvalSummary s;
  s.overall = summarize(plans);
  for (envs::Difficulty d : envs::kAllDifficulties) {
    std::vector<EvaluatedPlan> subset;
    for (const auto& p : plans) {
      if (p.difficulty == d) subset.push_back(p);
    }
    if (!subset.empty()) s.by_difficulty[static_cast<std::size_t>(d)] = summarize(subset);
  }
  return s;
}

std::vector<EvaluatedPlan> evaluate_plans(const policy::PolicySnapshot& snapshot,
                                          const envs::Environment& env,
                                          std::span<const envs::Task> tasks, std::uint64_t seed,
                                          std::uint64_t step, int samples_per_task,
                                          const sampling::SamplingConfig& cfg) {
  if (tasks.empty()) throw std::invalid_argument("evaluate: no tasks");
  if (samples_per_task < 1) throw std::invalid_argument("evaluate: samples_per_task must be >= 1");
  std::vector<EvaluatedPlan> plans;
  plans.reserve(tasks.size() * static_cast<std::size_t>(samples_per_task));
  for (const envs::Task& task : tasks) {
    const auto key = sampling::StreamKey::make(seed, step, task.id);
    for (int s = 0; s < samples_per_task; ++s) {
      Rng rng(key.rollout_seed(StreamTag::kEval, static_cast<std::uint64_t>(s)));
      const auto sample = sampling::sample_rollout(snapshot, task.prompt, cfg.max_answer_len, rng);
      plans.push_back(EvaluatedPlan::from_report(task, env.verify(task, sample.tokens)));
    }
  }
  return plans;
}

EvalSummary evaluate(const policy::PolicySnapshot& snapshot, const envs::Environment& env,
                     std::span<const envs::Task> tasks, std::uint64_t seed, std::uint64_t step,
                     int samples_per_task, const sampling::SamplingConfig& cfg) {
  const auto plans = evaluate_plans(snapshot, env, tasks, seed, step, samples_per_task, cfg);
  return summarize_by_difficulty(plans);
}

}  // namespace fbos::metrics
