#include "fbos/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "fbos/rng.hpp"

namespace fbos::gradcheck {
namespace {

constexpr std::uint64_t kRedrawTag = 0x6772616463686bULL;

struct Shape {
  policy::PolicyKind kind;
  int content;
  int positions;
  int max_positions;  // linear only
};

// Every shape stays under 300 parameters.
constexpr Shape kShapes[] = {
    {policy::PolicyKind::kTabularNgram, 3, 3, 0},  // |V| = 11, 132 params
    {policy::PolicyKind::kTabularNgram, 2, 2, 0},  // |V| = 9, 90 params
    {policy::PolicyKind::kLinearBag, 1, 1, 1},     // |V| = 7, 266 params
    {policy::PolicyKind::kLinearBag, 1, 0, 2},     // |V| = 6, 240 params
};

std::shared_ptr<const Vocab> make_vocab(const Shape& s) {
  Vocab::Builder b;
  for (int i = 0; i < s.content; ++i) b.add(fmt::format("c{}", i), TokenClass::kContent);
  b.add("fb", TokenClass::kFeedbackKind);
  for (int i = 0; i < s.positions; ++i) b.add(fmt::format("@{}", i), TokenClass::kPosition, i);
  return std::make_shared<const Vocab>(std::move(b).build());
}

policy::PolicyParams make_params(const Shape& s, std::shared_ptr<const Vocab> vocab) {
  return s.kind == policy::PolicyKind::kTabularNgram
             ? policy::PolicyParams::tabular(std::move(vocab), 1)
             : policy::PolicyParams::linear_bag(std::move(vocab), {s.max_positions});
}

TokenId random_non_reserved(const Vocab& v, Rng& rng) {
  return static_cast<TokenId>(4 + rng.below(static_cast<std::size_t>(v.size() - 4)));
}

sampling::Rollout draw(const policy::PolicySnapshot& snap, std::vector<TokenId> prompt,
                       sampling::Origin origin, int i, int j, int max_len, Rng& rng) {
  Rng stream(rng.next());
  auto s = sampling::sample_rollout(snap, prompt, max_len, stream);
  sampling::Rollout r;
  r.origin = origin;
  r.conditioning_prompt = std::move(prompt);
  r.index = i;
  r.child = j;
  r.parent_index = origin == sampling::Origin::kFap ? i : -1;
  r.tokens = std::move(s.tokens);
  r.behavior_logprobs = std::move(s.logprobs);
  r.entropy_sum = s.entropy_sum;
  r.report.reward = rng.normal();
  return r;
}

// Distance of g(rho) to the nearest clip boundary over every token the two
// losses touch.
double min_kink_distance(const Instance& inst, const objectives::ClipConfig& clip) {
  double best = std::numeric_limits<double>::infinity();
  auto visit = [&](const sampling::Rollout& r, std::span<const TokenId> target, bool reweighted) {
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const policy::Context ctx{target, std::span<const TokenId>(r.tokens).first(t)};
      const double rho = std::exp(inst.theta.log_prob(ctx, r.tokens[t]) - r.behavior_logprobs[t]);
      const double g = reweighted ? objectives::reweight(rho, clip.reweight_c) : rho;
      best = std::min({best, std::abs(g - (1.0 - clip.epsilon)), std::abs(g - (1.0 + clip.epsilon))});
    }
  };
  const auto& q = inst.task->prompt;
  for (const auto& r : inst.batch.initial_rollouts) visit(r, q, false);
  for (const auto& r : inst.batch.fap_rollouts) {
    visit(r, q, true);
    visit(r, r.conditioning_prompt, false);
  }
  return best;
}

double max_abs(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, std::abs(x));
  return m;
}

Instance draw_instance(std::uint64_t seed, const InstanceSpec& spec) {
  Rng rng(seed);
  std::vector<const Shape*> shapes;
  for (const Shape& s : kShapes) {
    auto v = make_vocab(s);
    if (make_params(s, v).num_params() <= static_cast<std::size_t>(spec.max_params)) {
      shapes.push_back(&s);
    }
  }
  if (shapes.empty()) throw std::invalid_argument("gradcheck: max_params too small");
  const Shape& shape = *shapes[rng.below(shapes.size())];

  auto vocab_ptr = make_vocab(shape);
  const Vocab& vocab = *vocab_ptr;
  policy::PolicyParams old = make_params(shape, vocab_ptr);
  for (double& w : old.mutable_weights()) w = rng.normal();
  policy::PolicyParams theta = old;
  for (double& w : theta.mutable_weights()) w += 0.3 * rng.normal();
  const policy::PolicySnapshot snap(old, 0);

  Instance inst{seed, vocab_ptr, std::make_unique<envs::Task>(), std::move(theta), {}, {}, {}, {}};
  inst.task->id = fmt::format("gc-{}", seed);
  const int qlen = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < qlen; ++i) inst.task->prompt.push_back(random_non_reserved(vocab, rng));

  const int max_n = std::max(1, spec.max_rollouts / 2);
  const int n = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(std::min(2, max_n))));
  const int max_k = (spec.max_rollouts - n) / n;
  if (max_k < 1) throw std::invalid_argument("gradcheck: max_rollouts too small");
  const int k = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(max_k)));
  const int max_len = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(spec.max_answer_len)));

  auto& b = inst.batch;
  b.task = inst.task.get();
  b.n = n;
  b.k = k;
  for (int i = 0; i < n; ++i) {
    b.initial_rollouts.push_back(
        draw(snap, inst.task->prompt, sampling::Origin::kInitial, i, -1, max_len, rng));
  }
  for (int i = 0; i < n; ++i) {
    sampling::FeedbackAugmentedPrompt fap;
    fap.base = inst.task->prompt;
    fap.answer = b.initial_rollouts[i].tokens;
    const int entries = static_cast<int>(rng.below(3));
    for (int e = 0; e < entries; ++e) {
      fap.feedback.push_back(vocab.id("fb"));
      const int extra = static_cast<int>(rng.below(3));
      for (int x = 0; x < extra; ++x) fap.feedback.push_back(random_non_reserved(vocab, rng));
    }
    fap.assembled = fap.base;
    fap.assembled.push_back(Vocab::kSepAnswer);
    fap.assembled.insert(fap.assembled.end(), fap.answer.begin(), fap.answer.end());
    fap.assembled.push_back(Vocab::kSepFeedback);
    fap.assembled.insert(fap.assembled.end(), fap.feedback.begin(), fap.feedback.end());
    fap.assembled.push_back(Vocab::kSepEnd);
    b.faps.push_back(std::move(fap));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      b.fap_rollouts.push_back(
          draw(snap, b.faps[i].assembled, sampling::Origin::kFap, i, j, max_len, rng));
    }
  }
  b.check();
  inst.groups = sampling::assemble_groups(b);
  const auto epa_rewards = inst.groups.epa.rewards();
  inst.epa_adv = objectives::group_advantages(epa_rewards, 1e-6);
  for (const auto& g : inst.groups.ecc) {
    const auto rewards = g.rewards();
    inst.ecc_advs.push_back(objectives::group_advantages(rewards, 1e-6));
  }
  return inst;
}

}  // namespace

Instance make_instance(std::uint64_t seed, const InstanceSpec& spec) {
  const objectives::ClipConfig clip;
  std::uint64_t s = seed;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Instance inst = draw_instance(s, spec);
    if (min_kink_distance(inst, clip) > spec.kink_margin &&
        max_abs(objectives::epa_loss(inst.theta, inst.batch, inst.epa_adv, clip).grad) >=
            spec.min_grad_scale &&
        max_abs(objectives::ecc_loss(inst.theta, inst.groups.ecc, inst.ecc_advs, clip).grad) >=
            spec.min_grad_scale) {
      inst.seed = seed;
      return inst;
    }
    s = derive_seed({seed, kRedrawTag, static_cast<std::uint64_t>(attempt)});
  }
  throw std::runtime_error(fmt::format("gradcheck: no kink-free instance for seed {}", seed));
}

double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    na = std::max(na, std::abs(analytic[i]));
    nb = std::max(nb, std::abs(numeric[i]));
  }
  return diff / std::max({na, nb, 1e-10});
}

std::vector<double> numeric_gradient(policy::PolicyParams theta, double h,
                                     const std::function<double(const policy::PolicyParams&)>& loss) {
  auto w = theta.mutable_weights();
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + h;
    const double up = loss(theta);
    w[i] = saved - h;
    const double down = loss(theta);
    w[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

CheckResult check_instance(const Instance& inst, const objectives::ClipConfig& clip, double h,
                           objectives::Fault fault) {
  CheckResult r;
  r.seed = inst.seed;
  r.num_params = inst.theta.num_params();
  r.rollouts = inst.batch.total();

  const auto epa = objectives::epa_loss(inst.theta, inst.batch, inst.epa_adv, clip, fault);
  const auto epa_num = numeric_gradient(inst.theta, h, [&](const policy::PolicyParams& p) {
    return objectives::epa_loss(p, inst.batch, inst.epa_adv, clip).loss;
  });
  r.epa_rel_error = relative_error(epa.grad, epa_num);

  const auto ecc = objectives::ecc_loss(inst.theta, inst.groups.ecc, inst.ecc_advs, clip);
  const auto ecc_num = numeric_gradient(inst.theta, h, [&](const policy::PolicyParams& p) {
    return objectives::ecc_loss(p, inst.groups.ecc, inst.ecc_advs, clip).loss;
  });
  r.ecc_rel_error = relative_error(ecc.grad, ecc_num);
  return r;
}

double Report::max_rel_error() const {
  double m = 0.0;
  for (const auto& r : results) m = std::max(m, r.max_rel_error());
  return m;
}

std::vector<std::uint64_t> Report::failing_seeds() const {
  std::vector<std::uint64_t> out;
  for (const auto& r : results) {
    if (!(r.max_rel_error() < threshold)) out.push_back(r.seed);
  }
  return out;
}

Report run(const Config& cfg) {
  if (cfg.instances < 1) throw std::invalid_argument("gradcheck: instances must be >= 1");
  if (!(cfg.step > 0.0)) throw std::invalid_argument("gradcheck: step must be > 0");
  const objectives::ClipConfig clip;
  Report rep;
  rep.threshold = cfg.threshold;
  for (int i = 0; i < cfg.instances; ++i) {
    const std::uint64_t seed = derive_seed({cfg.seed, static_cast<std::uint64_t>(i)});
    const Instance inst = make_instance(seed, cfg.instance);
    rep.results.push_back(check_instance(inst, clip, cfg.step, cfg.fault));
  }
  return rep;
}

}  // namespace fbos::gradcheck
