#ifndef FBOS_OBJECTIVES_HPP_
#define FBOS_OBJECTIVES_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "fbos/policy.hpp"
#include "fbos/sampling.hpp"

namespace fbos::objectives {

enum class Reweight { kRatioOverRatioPlusC, kIdentity };

struct ClipConfig {
  double epsilon = 0.2;     // clip range [1 - eps, 1 + eps]
  double reweight_c = 0.1;  // f(rho) = rho / (rho + c)
  Reweight reweight = Reweight::kRatioOverRatioPlusC;

  void validate() const;  // throws std::invalid_argument
};

// Group-normalized advantages (r - mu) / (sigma + eps) with the population
// standard deviation.
struct AdvantageSet {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;
  double eps = 0.0;
};

AdvantageSet group_advantages(std::span<const double> rewards, double eps_adv);

// rho^1: pi_theta(a_t | q, a_<t) / pi_old(a_t | q, a_<t).
double ratio_init(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                  std::span<const TokenId> prompt, std::span<const TokenId> answer,
                  std::size_t t);

// rho^2: pi_theta(a_t | q, a_<t) / pi_old(a_t | q~, a_<t). The numerator is
// the feedback-free target policy, the denominator the FAP behavior policy.
double ratio_fap(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                 std::span<const TokenId> prompt, std::span<const TokenId> fap_prompt,
                 std::span<const TokenId> answer, std::size_t t);

// rho~: both sides conditioned on the FAP.
double ratio_ecc(const policy::PolicyParams& theta, const policy::PolicyParams& theta_old,
                 std::span<const TokenId> fap_prompt, std::span<const TokenId> answer,
                 std::size_t t);

double reweight(double rho, double c);
double reweight_derivative(double rho, double c);

double clip(double x, double eps);

// min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)
double clipped_term(double ratio_like, double adv, double eps);

struct LossReport {
  double loss = 0.0;
  std::vector<double> grad;              // aligned with PolicyParams::weights()
  std::vector<double> rollout_loss;      // per rollout contribution to loss, in group order
  std::vector<double> clipped_fraction;  // per rollout, in group order
  std::size_t clipped_tokens = 0;
  std::size_t total_tokens = 0;

  double clip_fraction() const {
    return total_tokens == 0 ? 0.0 : static_cast<double>(clipped_tokens) / total_tokens;
  }
  // this += weight * other (loss and grad); token counts add.
  void accumulate(const LossReport& other, double weight);
};

// Deliberate gradient defects for mutation-testing the gradient checker.
enum class Fault { kNone, kFlipFapRatioGradient };

// L_EPA = L_init + L_FAP over the N = n + n*k rollouts of one task.
// `adv` is over the EPA group in assemble_groups order. The clip selector
// is frozen at the evaluated theta; A and theta_old are constants.
LossReport epa_loss(const policy::PolicyParams& theta, const sampling::StepBatch& batch,
                    const AdvantageSet& adv, const ClipConfig& cfg, Fault fault = Fault::kNone);

// L_ECC, averaged over the FAP groups; advs[i] is over groups[i].
LossReport ecc_loss(const policy::PolicyParams& theta,
                    std::span<const sampling::RolloutGroup> groups,
                    std::span<const AdvantageSet> advs, const ClipConfig& cfg);

// Vanilla GRPO surrogate: every rollout drawn from and scored against its
// own conditioning prompt, normalized by the group size.
LossReport grpo_loss(const policy::PolicyParams& theta, const sampling::RolloutGroup& group,
                     const AdvantageSet& adv, const ClipConfig& cfg);

}  // namespace fbos::objectives

#endif  // FBOS_OBJECTIVES_HPP_
