#include "fbos/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "fbos/rng.hpp"

namespace fbos::trainer {
namespace {

struct MethodInfo {
  Method method;
  std::string_view name;
  int updates;
  bool feedback;
};

constexpr MethodInfo kMethodInfo[] = {
    {Method::kFbos, "fbos", 2, true},
    {Method::kGrpo, "grpo", 1, false},
    {Method::kGrpoExtraUpdate, "grpo_extra_update", 2, false},
    {Method::kFbosWoEpa, "fbos_wo_epa", 1, true},
    {Method::kFbosWoEcc, "fbos_wo_ecc", 1, true},
};

const MethodInfo& info(Method m) {
  for (const auto& i : kMethodInfo) {
    if (i.method == m) return i;
  }
  throw std::invalid_argument("unknown method");
}

// Running population mean / std.
struct Moments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  double max = -std::numeric_limits<double>::infinity();

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
    max = std::max(max, x);
  }
  double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
  double std() const {
    if (count == 0) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
  }
};

struct TaskSample {
  const envs::Task* task = nullptr;
  sampling::StepBatch batch;              // feedback methods
  std::vector<sampling::Rollout> plain;   // grpo variants: N rollouts from q
  sampling::StreamKey key;
};

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

sampling::RolloutGroup group_of(const std::vector<sampling::Rollout>& rollouts) {
  sampling::RolloutGroup g;
  g.members.reserve(rollouts.size());
  for (const auto& r : rollouts) g.members.push_back(&r);
  return g;
}

}  // namespace

std::string_view to_string(Method m) { return info(m).name; }

Method method_from_string(std::string_view s) {
  for (const auto& i : kMethodInfo) {
    if (i.name == s) return i.method;
  }
  throw std::invalid_argument(fmt::format("unknown method '{}'", s));
}

int updates_per_step(Method m) { return info(m).updates; }
bool uses_feedback(Method m) { return info(m).feedback; }

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument(fmt::format("unknown optimizer '{}'", s));
}

policy::PolicyParams make_policy(const PolicySpec& spec, std::shared_ptr<const Vocab> vocab) {
  policy::PolicyParams p =
      spec.kind == policy::PolicyKind::kTabularNgram
          ? policy::PolicyParams::tabular(std::move(vocab), spec.context_order)
          : policy::PolicyParams::linear_bag(std::move(vocab), {spec.max_positions});
  p.set_temperature(spec.temperature);
  return p;
}

void TrainConfig::validate() const {
  if (n < 1) throw std::invalid_argument("train: n must be >= 1");
  if (k < 1) throw std::invalid_argument("train: k must be >= 1");
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (tasks_per_step < 1) throw std::invalid_argument("train: tasks_per_step must be >= 1");
  if (repeats < 1) throw std::invalid_argument("train: repeats must be >= 1");
  if (!(eps_adv >= 0.0)) throw std::invalid_argument("train: eps_adv must be >= 0");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw std::invalid_argument("train: learning rate must be finite and > 0");
  }
  if (sampling.max_answer_len < 1) throw std::invalid_argument("train: max_answer_len must be >= 1");
  clip.validate();
}

NonFiniteError::NonFiniteError(int step, const std::string& what)
    : std::runtime_error(fmt::format("non-finite training state at step {}: {}", step, what)),
      step_(step) {}

double Optimizer::apply(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("optimizer: shape mismatch");
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw std::domain_error("optimizer: non-finite gradient");
  ++t_;
  const double lr = spec_.learning_rate;
  if (spec_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  } else {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    const double b1 = spec_.beta1, b2 = spec_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + spec_.epsilon);
    }
  }
  if (!all_finite(params)) throw std::domain_error("optimizer: non-finite parameters");
  return norm;
}

TrainerState make_state(const TrainConfig& cfg, std::shared_ptr<const Vocab> vocab) {
  return TrainerState{make_policy(cfg.policy, std::move(vocab)), Optimizer(cfg.optimizer), 0, 0, 0};
}

std::vector<int> sample_subset(int total, int size, std::uint64_t seed) {
  if (size < 0 || size > total) throw std::invalid_argument("sample_subset: size out of range");
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < size; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<const envs::Task*> tasks_for_step(std::span<const envs::Task> suite, int step,
                                              int tasks_per_step) {
  if (suite.empty()) throw std::invalid_argument("tasks_for_step: empty suite");
  std::vector<const envs::Task*> out;
  out.reserve(tasks_per_step);
  const std::size_t start = static_cast<std::size_t>(step) * tasks_per_step;
  for (int i = 0; i < tasks_per_step; ++i) out.push_back(&suite[(start + i) % suite.size()]);
  return out;
}

StepMetrics train_step(TrainerState& state, const envs::Environment& env,
                       std::span<const envs::Task* const> tasks, const TrainConfig& cfg,
                       const BatchObserver& observer) {
  cfg.validate();
  if (tasks.empty()) throw std::invalid_argument("train_step: no tasks");
  const int step_index = state.step + 1;
  const Method method = cfg.method;
  const bool feedback = uses_feedback(method);
  const int budget = cfg.budget_per_task();

  // (1) Freeze theta_old. Every ratio below uses the behavior log-probs
  // stored at sampling time, so both updates see this same snapshot.
  const policy::PolicySnapshot snapshot(state.params, state.step);

  // (2) Sample.
  std::vector<TaskSample> samples(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    TaskSample& s = samples[t];
    s.task = tasks[t];
    s.key = sampling::StreamKey::make(cfg.seed, static_cast<std::uint64_t>(state.step), s.task->id);
    if (feedback) {
      s.batch = sampling::sample_step_batch(snapshot, env, *s.task, cfg.n, cfg.k, s.key,
                                            cfg.sampling);
    } else {
      s.plain = sampling::initial_exploration(snapshot, env, *s.task, budget, s.key, cfg.sampling);
    }
    if (observer) {
      if (feedback) {
        observer(s.batch);
      } else {
        sampling::StepBatch view;
        view.task = s.task;
        view.n = budget;
        view.initial_rollouts = s.plain;
        observer(view);
      }
    }
  }

  StepMetrics m;
  m.step = step_index;
  m.method = method;
  m.rollouts = static_cast<std::uint64_t>(budget) * tasks.size();

  // Metrics of the sampled data.
  Moments train, init, fap;
  double entropy_sum = 0.0;
  std::size_t token_count = 0;
  double fap_max_sum = 0.0;
  std::array<Moments, 3> diff_train, diff_fap;
  std::array<double, 3> diff_fap_max{};
  std::array<int, 3> diff_tasks{};
  // Entropy of the feedback-free policy pi_old(. | q, prefix) along every
  // sampled answer, whichever prompt the answer was drawn from.
  const envs::Task* current = nullptr;
  auto visit = [&](const sampling::Rollout& r) {
    const std::span<const TokenId> answer = r.tokens;
    for (std::size_t t = 0; t < answer.size(); ++t) {
      entropy_sum += snapshot.params().entropy({current->prompt, answer.first(t)});
    }
    token_count += answer.size();
  };
  for (const TaskSample& s : samples) {
    const auto d = static_cast<std::size_t>(s.task->difficulty);
    ++diff_tasks[d];
    current = s.task;
    if (feedback) {
      for (const auto& r : s.batch.initial_rollouts) {
        train.add(r.reward());
        init.add(r.reward());
        diff_train[d].add(r.reward());
        visit(r);
      }
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& r : s.batch.fap_rollouts) {
        train.add(r.reward());
        fap.add(r.reward());
        diff_train[d].add(r.reward());
        diff_fap[d].add(r.reward());
        best = std::max(best, r.reward());
        visit(r);
      }
      fap_max_sum += best;
      diff_fap_max[d] += best;
    } else {
      for (std::size_t i = 0; i < s.plain.size(); ++i) {
        const auto& r = s.plain[i];
        train.add(r.reward());
        if (static_cast<int>(i) < cfg.n) init.add(r.reward());
        diff_train[d].add(r.reward());
        visit(r);
      }
    }
  }
  m.train_score_mean = train.mean();
  m.train_score_std = train.std();
  m.init_score_mean = init.mean();
  if (feedback) {
    m.fap_score_mean = fap.mean();
    m.fap_score_std = fap.std();
    m.fap_score_max = fap_max_sum / static_cast<double>(tasks.size());
  }
  m.entropy = token_count == 0 ? 0.0 : entropy_sum / static_cast<double>(token_count);
  for (std::size_t d = 0; d < 3; ++d) {
    DifficultyScores& ds = m.by_difficulty[d];
    ds.tasks = diff_tasks[d];
    if (ds.tasks == 0) continue;
    ds.train_score_mean = diff_train[d].mean();
    ds.train_score_std = diff_train[d].std();
    if (feedback) {
      ds.fap_score_mean = diff_fap[d].mean();
      ds.fap_score_max = diff_fap_max[d] / ds.tasks;
    }
  }

  // (3)/(4) Updates; gradients are averaged over the step's tasks.
  const double task_weight = 1.0 / static_cast<double>(tasks.size());
  double grad_norm_sum = 0.0;
  int updates = 0;
  auto apply = [&](const objectives::LossReport& rep, std::string_view what) {
    if (!std::isfinite(rep.loss) || !all_finite(rep.grad)) {
      throw NonFiniteError(step_index, fmt::format("{} loss or gradient", what));
    }
    try {
      grad_norm_sum += state.optimizer.apply(state.params.mutable_weights(), rep.grad);
    } catch (const std::domain_error& e) {
      throw NonFiniteError(step_index, e.what());
    }
    m.update_rollouts.push_back(rep.rollout_loss.size());
    ++updates;
  };

  std::vector<sampling::Groups> groups;
  if (feedback) {
    groups.reserve(samples.size());
    for (const TaskSample& s : samples) groups.push_back(sampling::assemble_groups(s.batch));
  }

  if (method == Method::kFbos || method == Method::kFbosWoEcc) {
    objectives::LossReport total;
    for (std::size_t t = 0; t < samples.size(); ++t) {
      const auto rewards = groups[t].epa.rewards();
      const auto adv = objectives::group_advantages(rewards, cfg.eps_adv);
      total.accumulate(objectives::epa_loss(state.params, samples[t].batch, adv, cfg.clip),
                       task_weight);
    }
    m.epa_loss = total.loss;
    m.epa_clip_fraction = total.clip_fraction();
    apply(total, "EPA");
  }
  if (method == Method::kFbos || method == Method::kFbosWoEpa) {
    objectives::LossReport total;
    for (std::size_t t = 0; t < samples.size(); ++t) {
      std::vector<objectives::AdvantageSet> advs;
      advs.reserve(groups[t].ecc.size());
      for (const auto& g : groups[t].ecc) {
        const auto rewards = g.rewards();
        advs.push_back(objectives::group_advantages(rewards, cfg.eps_adv));
      }
      total.accumulate(objectives::ecc_loss(state.params, groups[t].ecc, advs, cfg.clip),
                       task_weight);
    }
    m.ecc_loss = total.loss;
    m.ecc_clip_fraction = total.clip_fraction();
    apply(total, "ECC");
  }
  if (method == Method::kGrpo || method == Method::kGrpoExtraUpdate) {
    std::vector<objectives::AdvantageSet> full_advs;
    objectives::LossReport total;
    for (const TaskSample& s : samples) {
      const auto group = group_of(s.plain);
      const auto rewards = group.rewards();
      full_advs.push_back(objectives::group_advantages(rewards, cfg.eps_adv));
      total.accumulate(objectives::grpo_loss(state.params, group, full_advs.back(), cfg.clip),
                       task_weight);
    }
    m.grpo_loss = total.loss;
    m.grpo_clip_fraction = total.clip_fraction();
    apply(total, "GRPO");

    if (method == Method::kGrpoExtraUpdate) {
      objectives::LossReport extra;
      const int subset_size = cfg.n * cfg.k;
      for (std::size_t t = 0; t < samples.size(); ++t) {
        const TaskSample& s = samples[t];
        const auto idx =
            sample_subset(budget, subset_size, s.key.rollout_seed(StreamTag::kSubset, 0));
        sampling::RolloutGroup sub;
        objectives::AdvantageSet adv;
        for (int i : idx) sub.members.push_back(&s.plain[i]);
        if (cfg.extra_update_reuse_advantages) {
          adv = full_advs[t];
          adv.values.clear();
          for (int i : idx) adv.values.push_back(full_advs[t].values[i]);
        } else {
          const auto rewards = sub.rewards();
          adv = objectives::group_advantages(rewards, cfg.eps_adv);
        }
        extra.accumulate(objectives::grpo_loss(state.params, sub, adv, cfg.clip), task_weight);
      }
      apply(extra, "GRPO extra update");
    }
  }

  m.updates = updates;
  m.grad_norm = updates == 0 ? 0.0 : grad_norm_sum / updates;
  state.step = step_index;
  state.rollouts_sampled += m.rollouts;
  state.updates_applied += static_cast<std::uint64_t>(updates);
  m.cumulative_rollouts = state.rollouts_sampled;
  return m;
}

}  // namespace fbos::trainer
