#include "fbos/sampling.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace fbos::sampling {

std::uint64_t hash_task_id(std::string_view id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

StreamKey StreamKey::make(std::uint64_t master_seed, std::uint64_t step, std::string_view task_id) {
  return {master_seed, step, hash_task_id(task_id)};
}

std::uint64_t StreamKey::rollout_seed(StreamTag tag, std::uint64_t i, std::uint64_t j) const {
  return derive_seed({master_seed, step, task, static_cast<std::uint64_t>(tag), i, j});
}

RolloutSample sample_rollout(const policy::PolicySnapshot& snapshot,
                             std::span<const TokenId> prompt, int max_len, Rng& rng) {
  if (max_len < 1) throw std::invalid_argument("sample_rollout: max_len must be >= 1");
  const policy::PolicyParams& params = snapshot.params();
  const int v = params.vocab().size();
  std::vector<double> probs(v);
  RolloutSample out;
  out.tokens.reserve(max_len);
  out.logprobs.reserve(max_len);
  for (int t = 0; t < max_len; ++t) {
    const policy::Context ctx{prompt, out.tokens};
    params.distribution(ctx, probs);
    double h = 0.0;
    for (double p : probs) {
      if (p > 0.0) h -= p * std::log(p);
    }
    const double u = rng.uniform();
    double cum = 0.0;
    TokenId tok = v - 1;
    for (int j = 0; j < v; ++j) {
      cum += probs[j];
      if (u < cum) {
        tok = j;
        break;
      }
    }
    // Guard against the tail of the cumulative sum landing on a zero-mass token.
    while (tok > 0 && probs[tok] == 0.0) --tok;
    out.tokens.push_back(tok);
    out.logprobs.push_back(std::max(std::log(probs[tok]), std::log(policy::kProbFloor)));
    out.entropy_sum += h;
    if (tok == Vocab::kEos) break;
  }
  return out;
}

namespace {

Rollout make_rollout(const policy::PolicySnapshot& snapshot, const envs::Environment& env,
                     const envs::Task& task, std::vector<TokenId> prompt, Origin origin, int i,
                     int j, std::uint64_t seed, int max_len) {
  Rng rng(seed);
  RolloutSample s = sample_rollout(snapshot, prompt, max_len, rng);
  Rollout r;
  r.origin = origin;
  r.conditioning_prompt = std::move(prompt);
  r.index = i;
  r.child = j;
  r.parent_index = origin == Origin::kFap ? i : -1;
  r.tokens = std::move(s.tokens);
  r.behavior_logprobs = std::move(s.logprobs);
  r.entropy_sum = s.entropy_sum;
  r.report = env.verify(task, r.tokens);
  return r;
}

}  // namespace

std::vector<Rollout> initial_exploration(const policy::PolicySnapshot& snapshot,
                                         const envs::Environment& env, const envs::Task& task,
                                         int n, const StreamKey& key, const SamplingConfig& cfg) {
  if (n < 1) throw std::invalid_argument("initial_exploration: n must be >= 1");
  std::vector<Rollout> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(make_rollout(snapshot, env, task, task.prompt, Origin::kInitial, i, -1,
                               key.rollout_seed(StreamTag::kInitial, i), cfg.max_answer_len));
  }
  return out;
}

FeedbackAugmentedPrompt build_fap(const envs::Task& task, const Rollout& rollout,
                                  const SamplingConfig& cfg) {
  if (rollout.origin != Origin::kInitial) {
    throw std::invalid_argument("build_fap: FAPs are built from initial rollouts only");
  }
  const int fixed = static_cast<int>(task.prompt.size() + rollout.tokens.size()) + 3;
  if (fixed > cfg.max_prompt_len) {
    throw std::invalid_argument("build_fap: prompt and answer exceed max_prompt_len");
  }
  FeedbackAugmentedPrompt fap;
  fap.base = task.prompt;
  fap.answer = rollout.tokens;
  fap.feedback = envs::render_feedback(rollout.report,
                                       std::min(cfg.max_feedback_len, cfg.max_prompt_len - fixed));
  fap.assembled.reserve(fixed + fap.feedback.size());
  fap.assembled.insert(fap.assembled.end(), fap.base.begin(), fap.base.end());
  fap.assembled.push_back(Vocab::kSepAnswer);
  fap.assembled.insert(fap.assembled.end(), fap.answer.begin(), fap.answer.end());
  fap.assembled.push_back(Vocab::kSepFeedback);
  fap.assembled.insert(fap.assembled.end(), fap.feedback.begin(), fap.feedback.end());
  fap.assembled.push_back(Vocab::kSepEnd);
  return fap;
}

std::vector<Rollout> feedback_guided_sampling(const policy::PolicySnapshot& snapshot,
                                              const envs::Environment& env,
                                              const envs::Task& task,
                                              std::span<const FeedbackAugmentedPrompt> faps,
                                              int k, const StreamKey& key,
                                              const SamplingConfig& cfg) {
  if (k < 1) throw std::invalid_argument("feedback_guided_sampling: k must be >= 1");
  std::vector<Rollout> out;
  out.reserve(faps.size() * k);
  for (std::size_t i = 0; i < faps.size(); ++i) {
    for (int j = 0; j < k; ++j) {
      out.push_back(make_rollout(snapshot, env, task, faps[i].assembled, Origin::kFap,
                                 static_cast<int>(i), j, key.rollout_seed(StreamTag::kFap, i, j),
                                 cfg.max_answer_len));
    }
  }
  return out;
}

void StepBatch::check() const {
  if (static_cast<int>(initial_rollouts.size()) != n || static_cast<int>(faps.size()) != n ||
      static_cast<int>(fap_rollouts.size()) != n * k) {
    throw std::logic_error("StepBatch: size invariant broken");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const Rollout& r = fap_rollout(i, j);
      if (r.origin != Origin::kFap || r.parent_index != i || r.child != j) {
        throw std::logic_error("StepBatch: FAP rollout out of order");
      }
    }
  }
  for (const auto* group : {&initial_rollouts, &fap_rollouts}) {
    for (const auto& r : *group) {
      if (r.tokens.size() != r.behavior_logprobs.size()) {
        throw std::logic_error("StepBatch: |behavior_logprobs| != |tokens|");
      }
    }
  }
}

StepBatch sample_step_batch(const policy::PolicySnapshot& snapshot, const envs::Environment& env,
                            const envs::Task& task, int n, int k, const StreamKey& key,
                            const SamplingConfig& cfg) {
  StepBatch b;
  b.task = &task;
  b.n = n;
  b.k = k;
  b.initial_rollouts = initial_exploration(snapshot, env, task, n, key, cfg);
  b.faps.reserve(n);
  for (const Rollout& r : b.initial_rollouts) b.faps.push_back(build_fap(task, r, cfg));
  b.fap_rollouts = feedback_guided_sampling(snapshot, env, task, b.faps, k, key, cfg);
  return b;
}

std::vector<double> RolloutGroup::rewards() const {
  std::vector<double> r;
  r.reserve(members.size());
  for (const Rollout* m : members) r.push_back(m->reward());
  return r;
}

Groups assemble_groups(const StepBatch& batch) {
  batch.check();
  Groups g;
  g.epa.members.reserve(batch.total());
  for (const Rollout& r : batch.initial_rollouts) g.epa.members.push_back(&r);
  for (const Rollout& r : batch.fap_rollouts) g.epa.members.push_back(&r);
  g.ecc.resize(batch.n);
  for (int i = 0; i < batch.n; ++i) {
    for (int j = 0; j < batch.k; ++j) g.ecc[i].members.push_back(&batch.fap_rollout(i, j));
  }
  return g;
}

void write_rollout_dump(std::ostream& out, int step, const StepBatch& batch) {
  auto emit = [&](const Rollout& r) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["task"] = batch.task ? batch.task->id : std::string();
    j["origin"] = std::string(to_string(r.origin));
    j["i"] = r.index;
    j["j"] = r.child;
    j["reward"] = r.reward();
    j["tokens"] = r.tokens.size();
    out << j.dump() << '\n';
  };
  for (const Rollout& r : batch.initial_rollouts) emit(r);
  for (const Rollout& r : batch.fap_rollouts) emit(r);
}

std::string_view to_string(Origin o) { return o == Origin::kInitial ? "initial" : "fap"; }

}  // namespace fbos::sampling
