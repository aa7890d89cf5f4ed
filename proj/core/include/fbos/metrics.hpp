#ifndef FBOS_METRICS_HPP_
#define FBOS_METRICS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fbos/envs.hpp"
#include "fbos/policy.hpp"
#include "fbos/sampling.hpp"

namespace fbos::metrics {

struct ConstraintOutcome {
  envs::ConstraintClass cls = envs::ConstraintClass::kHard;
  bool passed = false;
};

struct EvaluatedPlan {
  std::string task_id;
  envs::Difficulty difficulty = envs::Difficulty::kEasy;
  std::vector<ConstraintOutcome> constraint_results;
  bool final_pass = true;  // every constraint of every class passed
  double score = 0.0;      // verifier reward

  static EvaluatedPlan from_report(const envs::Task& task, const envs::VerifierReport& report);
  // Recomputes final_pass from constraint_results.
  void refresh();
};

// Sum of passed over sum of constraints in `cls`. Throws std::domain_error
// if the plans hold no constraint of that class.
double micro_pass_rate(std::span<const EvaluatedPlan> plans, envs::ConstraintClass cls);

// Fraction of plans whose `cls` constraints all pass; a plan without any
// constraint of that class counts as satisfied. Throws on an empty list.
double macro_pass_rate(std::span<const EvaluatedPlan> plans, envs::ConstraintClass cls);

double final_pass_rate(std::span<const EvaluatedPlan> plans);

double avg_score(std::span<const double> scores);

struct RateSet {
  int plans = 0;
  std::optional<double> commonsense_micro;  // nullopt without such constraints
  double commonsense_macro = 0.0;
  std::optional<double> hard_micro;
  double hard_macro = 0.0;
  double final_pass_rate = 0.0;
  double avg_score = 0.0;
};

RateSet summarize(std::span<const EvaluatedPlan> plans);

struct EvalSummary {
  RateSet overall;
  std::array<std::optional<RateSet>, 3> by_difficulty;  // indexed by Difficulty
};

EvalSummary summarize_by_difficulty(std::span<const EvaluatedPlan> plans);

// Samples `samples_per_task` answers per task conditioned on q only,
// verifies them and aggregates. Sample s of task t uses the stream
// StreamKey(seed, step, t.id).rollout_seed(kEval, s).
std::vector<EvaluatedPlan> evaluate_plans(const policy::PolicySnapshot& snapshot,
                                          const envs::Environment& env,
                                          std::span<const envs::Task> tasks, std::uint64_t seed,
                                          std::uint64_t step, int samples_per_task,
                                          const sampling::SamplingConfig& cfg);

EvalSummary evaluate(const policy::PolicySnapshot& snapshot, const envs::Environment& env,
                     std::span<const envs::Task> tasks, std::uint64_t seed, std::uint64_t step,
                     int samples_per_task, const sampling::SamplingConfig& cfg);

}  // namespace fbos::metrics

#endif  // FBOS_METRICS_HPP_
