#ifndef FBOS_GRADCHECK_HPP_
#define FBOS_GRADCHECK_HPP_

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fbos/envs.hpp"
#include "fbos/objectives.hpp"
#include "fbos/policy.hpp"
#include "fbos/sampling.hpp"

namespace fbos::gradcheck {

// A small self-contained loss-evaluation problem: theta, the frozen
// behavior snapshot, one task's StepBatch with random rewards, and the
// matching advantages.
struct Instance {
  std::uint64_t seed = 0;
  std::shared_ptr<const Vocab> vocab;
  std::unique_ptr<envs::Task> task;  // stable address for batch.task
  policy::PolicyParams theta;
  sampling::StepBatch batch;
  objectives::AdvantageSet epa_adv;
  std::vector<objectives::AdvantageSet> ecc_advs;
  sampling::Groups groups;
};

struct InstanceSpec {
  int max_params = 300;
  int max_rollouts = 8;  // N = n + n*k
  int max_answer_len = 6;
  double kink_margin = 1e-3;  // reject instances this close to a clip boundary
  // Reject instances whose EPA or ECC gradient has a smaller max-norm; there
  // finite-difference roundoff dominates (e.g. identical rollouts with
  // opposite advantages cancel exactly).
  double min_grad_scale = 1e-6;
};

// Deterministic in `seed`. Instances near a clip boundary or with a
// vanishing gradient are redrawn from a derived seed.
Instance make_instance(std::uint64_t seed, const InstanceSpec& spec = {});

struct CheckResult {
  std::uint64_t seed = 0;
  std::size_t num_params = 0;
  int rollouts = 0;
  double epa_rel_error = 0.0;
  double ecc_rel_error = 0.0;
  double max_rel_error() const { return std::max(epa_rel_error, ecc_rel_error); }
};

struct Config {
  int instances = 100;
  std::uint64_t seed = 1;
  double step = 1e-5;
  double threshold = 1e-5;
  InstanceSpec instance;
  objectives::Fault fault = objectives::Fault::kNone;
};

// ||a - b||_inf / max(||a||_inf, ||b||_inf, 1e-10)
double relative_error(std::span<const double> analytic, std::span<const double> numeric);

// Central differences of `loss` over every parameter.
std::vector<double> numeric_gradient(policy::PolicyParams theta, double h,
                                     const std::function<double(const policy::PolicyParams&)>& loss);

CheckResult check_instance(const Instance& inst, const objectives::ClipConfig& clip, double h,
                           objectives::Fault fault = objectives::Fault::kNone);

struct Report {
  std::vector<CheckResult> results;
  double threshold = 0.0;
  double max_rel_error() const;
  bool passed() const { return max_rel_error() < threshold; }
  std::vector<std::uint64_t> failing_seeds() const;
};

Report run(const Config& cfg);

}  // namespace fbos::gradcheck

#endif  // FBOS_GRADCHECK_HPP_
