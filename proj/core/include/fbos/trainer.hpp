#ifndef FBOS_TRAINER_HPP_
#define FBOS_TRAINER_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fbos/envs.hpp"
#include "fbos/objectives.hpp"
#include "fbos/policy.hpp"
#include "fbos/sampling.hpp"

namespace fbos::trainer {

enum class Method { kFbos, kGrpo, kGrpoExtraUpdate, kFbosWoEpa, kFbosWoEcc };
inline constexpr Method kAllMethods[] = {Method::kFbos, Method::kGrpo, Method::kGrpoExtraUpdate,
                                         Method::kFbosWoEpa, Method::kFbosWoEcc};

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

// Parameter updates one step of `m` performs.
int updates_per_step(Method m);
// True if `m` builds FAPs and samples the second round.
bool uses_feedback(Method m);

enum class OptimizerKind { kSgd, kAdam };
std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(std::string_view s);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct PolicySpec {
  policy::PolicyKind kind = policy::PolicyKind::kLinearBag;
  int context_order = 2;  // tabular only
  int max_positions = 8;  // linear only
  double temperature = 1.0;
};

policy::PolicyParams make_policy(const PolicySpec& spec, std::shared_ptr<const Vocab> vocab);

struct TrainConfig {
  Method method = Method::kFbos;
  int n = 8;
  int k = 8;
  objectives::ClipConfig clip;
  double eps_adv = 1e-6;
  OptimizerSpec optimizer;
  PolicySpec policy;
  int steps = 200;
  int tasks_per_step = 1;
  std::uint64_t seed = 0;
  sampling::SamplingConfig sampling;
  int repeats = 3;
  // grpo_extra_update: reuse the full-group advantages on the subset
  // instead of recomputing them over it.
  bool extra_update_reuse_advantages = false;

  // Rollouts sampled per task per step; identical for every method.
  int budget_per_task() const { return n + n * k; }
  void validate() const;  // throws std::invalid_argument
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int step, const std::string& what);
  int step() const { return step_; }

 private:
  int step_;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec = {}) : spec_(spec) {}

  // params -= update(grad). Returns the L2 norm of grad. Throws
  // std::domain_error on non-finite input or output.
  double apply(std::span<double> params, std::span<const double> grad);

  const OptimizerSpec& spec() const { return spec_; }
  std::int64_t steps_taken() const { return t_; }

 private:
  OptimizerSpec spec_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

struct TrainerState {
  policy::PolicyParams params;
  Optimizer optimizer;
  int step = 0;  // steps completed
  std::uint64_t rollouts_sampled = 0;
  std::uint64_t updates_applied = 0;
};

TrainerState make_state(const TrainConfig& cfg, std::shared_ptr<const Vocab> vocab);

// Not-applicable fields are nullopt (e.g. FAP scores for grpo).
struct DifficultyScores {
  int tasks = 0;
  std::optional<double> train_score_mean, train_score_std;
  std::optional<double> fap_score_mean, fap_score_max;
};

struct StepMetrics {
  int step = 0;  // 1-based index of the step just taken
  Method method = Method::kFbos;
  std::uint64_t rollouts = 0;  // sampled this step
  std::uint64_t cumulative_rollouts = 0;
  int updates = 0;
  // Rollouts whose surrogate entered each update, summed over tasks.
  std::vector<std::size_t> update_rollouts;
  // Rewards of the EPA group (n + n*k rollouts; all from q for grpo variants).
  double train_score_mean = 0.0;
  double train_score_std = 0.0;
  // First-round rollouts from q only.
  double init_score_mean = 0.0;
  // ECC train score: rewards of the second-round rollouts.
  std::optional<double> fap_score_mean, fap_score_std;
  // Mean over tasks of the best second-round reward.
  std::optional<double> fap_score_max;
  // Mean next-token entropy of pi_old(. | q, prefix) over every sampled token.
  double entropy = 0.0;
  double grad_norm = 0.0;  // mean L2 norm over this step's updates
  std::optional<double> epa_loss, ecc_loss, grpo_loss;
  std::optional<double> epa_clip_fraction, ecc_clip_fraction, grpo_clip_fraction;
  std::array<DifficultyScores, 3> by_difficulty{};
};

// Sees every task's sampled rollouts before the updates. For grpo variants
// the batch holds all n + n*k rollouts as initial rollouts with k = 0.
using BatchObserver = std::function<void(const sampling::StepBatch&)>;

// Samples with the step snapshot and applies the method's updates.
// `tasks` are this step's tasks; gradients are averaged over them.
StepMetrics train_step(TrainerState& state, const envs::Environment& env,
                       std::span<const envs::Task* const> tasks, const TrainConfig& cfg,
                       const BatchObserver& observer = nullptr);

// Indices of the extra-update subset: `size` distinct indices in [0, total),
// sorted, drawn without replacement from `seed`.
std::vector<int> sample_subset(int total, int size, std::uint64_t seed);

// Fixed task order for step `step` (0-based): consecutive tasks_per_step
// entries of the suite, wrapping around.
std::vector<const envs::Task*> tasks_for_step(std::span<const envs::Task> suite, int step,
                                              int tasks_per_step);

}  // namespace fbos::trainer

#endif  // FBOS_TRAINER_HPP_
