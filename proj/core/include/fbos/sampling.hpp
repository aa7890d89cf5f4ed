#ifndef FBOS_SAMPLING_HPP_
#define FBOS_SAMPLING_HPP_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fbos/envs.hpp"
#include "fbos/policy.hpp"
#include "fbos/rng.hpp"

namespace fbos::sampling {

enum class Origin : std::uint8_t { kInitial = 0, kFap = 1 };

struct Rollout {
  Origin origin = Origin::kInitial;
  std::vector<TokenId> conditioning_prompt;  // q, or the FAP q~_i
  int index = 0;          // i
  int child = -1;         // j, FAP rollouts only
  int parent_index = -1;  // i of the first-round rollout, FAP rollouts only
  std::vector<TokenId> tokens;
  std::vector<double> behavior_logprobs;  // under theta_old and conditioning_prompt
  envs::VerifierReport report;
  double entropy_sum = 0.0;  // sum of behavior next-token entropies over tokens

  double reward() const { return report.reward; }
};

// q (+) <sep:ans> ans (+) <sep:fb> F (+) <sep:end>
struct FeedbackAugmentedPrompt {
  std::vector<TokenId> base;
  std::vector<TokenId> answer;
  std::vector<TokenId> feedback;
  std::vector<TokenId> assembled;
};

struct SamplingConfig {
  int max_answer_len = 8;
  int max_feedback_len = 32;
  int max_prompt_len = 64;
};

// Seeds every rollout of one (step, task) pair. Rollout (origin, i, j) gets
// the stream derive_seed(master, step, hash(task id), origin, i, j).
struct StreamKey {
  std::uint64_t master_seed = 0;
  std::uint64_t step = 0;
  std::uint64_t task = 0;

  static StreamKey make(std::uint64_t master_seed, std::uint64_t step, std::string_view task_id);
  std::uint64_t rollout_seed(StreamTag tag, std::uint64_t i, std::uint64_t j = 0) const;
};

// FNV-1a, stable across platforms.
std::uint64_t hash_task_id(std::string_view id);

struct RolloutSample {
  std::vector<TokenId> tokens;
  std::vector<double> logprobs;
  double entropy_sum = 0.0;
};

// Samples until EOS or max_len tokens.
RolloutSample sample_rollout(const policy::PolicySnapshot& snapshot,
                             std::span<const TokenId> prompt, int max_len, Rng& rng);

std::vector<Rollout> initial_exploration(const policy::PolicySnapshot& snapshot,
                                         const envs::Environment& env, const envs::Task& task,
                                         int n, const StreamKey& key, const SamplingConfig& cfg);

FeedbackAugmentedPrompt build_fap(const envs::Task& task, const Rollout& rollout,
                                  const SamplingConfig& cfg);

std::vector<Rollout> feedback_guided_sampling(const policy::PolicySnapshot& snapshot,
                                              const envs::Environment& env,
                                              const envs::Task& task,
                                              std::span<const FeedbackAugmentedPrompt> faps,
                                              int k, const StreamKey& key,
                                              const SamplingConfig& cfg);

struct StepBatch {
  const envs::Task* task = nullptr;
  int n = 0;
  int k = 0;
  std::vector<Rollout> initial_rollouts;      // n
  std::vector<FeedbackAugmentedPrompt> faps;  // n
  std::vector<Rollout> fap_rollouts;          // n*k, ordered (i, j)

  int total() const { return n + n * k; }
  const Rollout& fap_rollout(int i, int j) const { return fap_rollouts[i * k + j]; }
  // Throws std::logic_error if a size or parent invariant is broken.
  void check() const;
};

// Both sampling rounds for one task.
StepBatch sample_step_batch(const policy::PolicySnapshot& snapshot, const envs::Environment& env,
                            const envs::Task& task, int n, int k, const StreamKey& key,
                            const SamplingConfig& cfg);

struct RolloutGroup {
  std::vector<const Rollout*> members;

  std::size_t size() const { return members.size(); }
  std::vector<double> rewards() const;
};

struct Groups {
  RolloutGroup epa;               // all N rollouts ordered by (origin, i, j)
  std::vector<RolloutGroup> ecc;  // one group of k per FAP
};

Groups assemble_groups(const StepBatch& batch);

// One JSON object per rollout: step, task, origin, i, j, reward, tokens.
void write_rollout_dump(std::ostream& out, int step, const StepBatch& batch);

std::string_view to_string(Origin o);

}  // namespace fbos::sampling

#endif  // FBOS_SAMPLING_HPP_
