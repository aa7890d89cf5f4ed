#include "fbos/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fbos::objectives {

void ClipConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("clip epsilon must be in (0, 1)");
  if (!(reweight_c > 0.0) || !std::isfinite(reweight_c)) {
    throw std::invalid_argument("reweight constant must be finite and > 0");
  }
}

AdvantageSet group_advantages(std::span<const double> rewards, double eps_adv) {
  if (rewards.empty()) throw std::domain_error("group_advantages: empty group");
  if (!(eps_adv >= 0.0)) throw std::invalid_argument("group_advantages: eps_adv must be >= 0");
  AdvantageSet a;
  a.eps = eps_adv;
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  a.mean = sum / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - a.mean) * (r - a.mean);
  a.std = std::sqrt(ss / n);
  a.values.resize(rewards.size(), 0.0);
  // Summation rounding would otherwise leave a constant group with a tiny
  // nonzero spread, which eps = 0 amplifies to unit advantages.
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; })) {
    a.mean = rewards[0];
    a.std = 0.0;
    return a;
  }
  const double denom = a.std + eps_adv;
  if (denom > 0.0) {
    for (std::size_t i = 0; i < rewards.size(); ++i) a.values[i] = (rewards[i] - a.mean) / denom;
  }
  return a;
}

double ratio_init(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                  std::span<const TokenId> prompt, std::span<const TokenId> answer,
                  std::size_t t) {
  if (t >= answer.size()) throw std::out_of_range("ratio_init: token index");
  const policy::Context ctx{prompt, answer.first(t)};
  return std::exp(theta.log_prob(ctx, answer[t]) - theta_old.log_prob(ctx, answer[t]));
}

double ratio_fap(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                 std::span<const TokenId> prompt, std::span<const TokenId> fap_prompt,
                 std::span<const TokenId> answer, std::size_t t) {
  if (t >= answer.size()) throw std::out_of_range("ratio_fap: token index");
  const policy::Context target{prompt, answer.first(t)};
  const policy::Context behavior{fap_prompt, answer.first(t)};
  return std::exp(theta.log_prob(target, answer[t]) - theta_old.log_prob(behavior, answer[t]));
}

double ratio_ecc(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                 std::span<const TokenId> fap_prompt, std::span<const TokenId> answer,
                 std::size_t t) {
  return ratio_init(theta, theta_old, fap_prompt, answer, t);
}

double reweight(double rho, double c) {
  if (rho < 0.0) throw std::domain_error("reweight: rho must be >= 0");
  return rho / (rho + c);
}

double reweight_derivative(double rho, double c) { return c / ((rho + c) * (rho + c)); }

double clip(double x, double eps) { return std::clamp(x, 1.0 - eps, 1.0 + eps); }

double clipped_term(double ratio_like, double adv, double eps) {
  return std::min(ratio_like * adv, clip(ratio_like, eps) * adv);
}

void LossReport::accumulate(const LossReport& other, double weight) {
  loss += weight * other.loss;
  if (grad.empty()) grad.assign(other.grad.size(), 0.0);
  if (grad.size() != other.grad.size()) throw std::invalid_argument("LossReport: grad size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weight * other.grad[i];
  for (double l : other.rollout_loss) rollout_loss.push_back(weight * l);
  clipped_fraction.insert(clipped_fraction.end(), other.clipped_fraction.begin(),
                          other.clipped_fraction.end());
  clipped_tokens += other.clipped_tokens;
  total_tokens += other.total_tokens;
}

namespace {

// Adds -(weight / |ans|) * sum_t min(g(rho) A, clip(g(rho)) A) for one rollout
// to `report`, where rho is scored under `target_prompt` against the stored
// behavior log-probs and g is the identity or the reweighting function.
void add_rollout_surrogate(const policy::PolicyParams& theta, const sampling::Rollout& r,
                           std::span<const TokenId> target_prompt, double adv, double weight,
                           bool reweighted, const ClipConfig& cfg, Fault fault,
                           LossReport& report) {
  thread_local policy::TokenEval eval;
  const std::size_t len = r.tokens.size();
  if (len == 0) throw std::domain_error("surrogate: empty rollout");
  const double per_token = weight / static_cast<double>(len);
  std::size_t clipped = 0;
  double contribution = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    const policy::Context ctx{target_prompt, std::span<const TokenId>(r.tokens).first(t)};
    theta.evaluate(ctx, r.tokens[t], eval);
    const double rho = std::exp(eval.log_prob - r.behavior_logprobs[t]);
    const double g = reweighted ? reweight(rho, cfg.reweight_c) : rho;
    const double dg = reweighted ? reweight_derivative(rho, cfg.reweight_c) : 1.0;
    const double unclipped = g * adv;
    const double clipped_val = clip(g, cfg.epsilon) * adv;
    contribution -= per_token * std::min(unclipped, clipped_val);
    if (unclipped <= clipped_val) {
      // d/dtheta [g(rho) A] = A g'(rho) rho d log pi.
      double scale = -per_token * adv * dg * rho;
      if (fault == Fault::kFlipFapRatioGradient && reweighted) scale = -scale;
      theta.accumulate_grad(eval, scale, report.grad);
    } else {
      ++clipped;
    }
  }
  report.loss += contribution;
  report.rollout_loss.push_back(contribution);
  report.clipped_fraction.push_back(static_cast<double>(clipped) / static_cast<double>(len));
  report.clipped_tokens += clipped;
  report.total_tokens += len;
}

LossReport empty_report(const policy::PolicyParams& theta) {
  LossReport rep;
  rep.grad.assign(theta.num_params(), 0.0);
  return rep;
}

}  // namespace

LossReport epa_loss(const policy::PolicyParams& theta, const sampling::StepBatch& batch,
                    const AdvantageSet& adv, const ClipConfig& cfg, Fault fault) {
  cfg.validate();
  batch.check();
  const int total = batch.total();
  if (total == 0) throw std::domain_error("epa_loss: empty group");
  if (static_cast<int>(adv.values.size()) != total) {
    throw std::invalid_argument("epa_loss: advantage count != n + n*k");
  }
  const std::span<const TokenId> q = batch.task->prompt;
  const bool reweighted = cfg.reweight == Reweight::kRatioOverRatioPlusC;
  const double weight = 1.0 / static_cast<double>(total);
  LossReport rep = empty_report(theta);
  for (int i = 0; i < batch.n; ++i) {
    add_rollout_surrogate(theta, batch.initial_rollouts[i], q, adv.values[i], weight, false, cfg,
                          fault, rep);
  }
  for (int idx = 0; idx < batch.n * batch.k; ++idx) {
    // Numerator on q although the rollout was drawn under q~_i.
    add_rollout_surrogate(theta, batch.fap_rollouts[idx], q, adv.values[batch.n + idx], weight,
                          reweighted, cfg, fault, rep);
  }
  return rep;
}

LossReport ecc_loss(const policy::PolicyParams& theta,
                    std::span<const sampling::RolloutGroup> groups,
                    std::span<const AdvantageSet> advs, const ClipConfig& cfg) {
  cfg.validate();
  if (groups.empty()) throw std::domain_error("ecc_loss: no groups");
  if (groups.size() != advs.size()) throw std::invalid_argument("ecc_loss: one AdvantageSet per group");
  LossReport rep = empty_report(theta);
  const double outer = 1.0 / static_cast<double>(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& members = groups[g].members;
    if (members.empty()) throw std::domain_error("ecc_loss: empty group");
    if (advs[g].values.size() != members.size()) {
      throw std::invalid_argument("ecc_loss: advantage count != group size");
    }
    const double weight = outer / static_cast<double>(members.size());
    for (std::size_t j = 0; j < members.size(); ++j) {
      add_rollout_surrogate(theta, *members[j], members[j]->conditioning_prompt,
                            advs[g].values[j], weight, false, cfg, Fault::kNone, rep);
    }
  }
  return rep;
}

LossReport grpo_loss(const policy::PolicyParams& theta, const sampling::RolloutGroup& group,
                     const AdvantageSet& adv, const ClipConfig& cfg) {
  cfg.validate();
  if (group.members.empty()) throw std::domain_error("grpo_loss: empty group");
  if (adv.values.size() != group.members.size()) {
    throw std::invalid_argument("grpo_loss: advantage count != group size");
  }
  LossReport rep = empty_report(theta);
  const double weight = 1.0 / static_cast<double>(group.members.size());
  for (std::size_t i = 0; i < group.members.size(); ++i) {
    add_rollout_surrogate(theta, *group.members[i], group.members[i]->conditioning_prompt,
                          adv.values[i], weight, false, cfg, Fault::kNone, rep);
  }
  return rep;
}

}  // namespace fbos::objectives
