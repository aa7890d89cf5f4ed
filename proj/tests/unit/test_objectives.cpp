#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>

#include "fbos/envs.hpp"
#include "fbos/gradcheck.hpp"
#include "fbos/objectives.hpp"
#include "fbos/rng.hpp"
#include "fbos/sampling.hpp"
#include "support.hpp"

using namespace fbos::objectives;
using fbos::Rng;
using fbos::TokenId;
using fbos::Vocab;
using fbos::policy::Context;
using fbos::policy::PolicyParams;
using fbos::policy::PolicySnapshot;
using fbos::testing::set_logit;
using fbos::testing::small_vocab;

namespace {

constexpr double kTol = 1e-9;

// A real batch from the ConstraintPlan environment under a random theta_old.
struct BatchFixture {
  fbos::envs::ConstraintPlanEnv env;
  fbos::envs::Task task = env.make_task("obj", fbos::envs::Difficulty::kMedium,
                                        {{0, 1}, {2, 3}}, true, 9);
  PolicyParams old = PolicyParams::linear_bag(env.vocab_ptr());
  fbos::sampling::StepBatch batch;
  fbos::sampling::Groups groups;

  BatchFixture(int n, int k, std::uint64_t seed) {
    Rng rng(seed);
    for (double& w : old.mutable_weights()) w = 0.4 * rng.normal();
    const PolicySnapshot snap(old, 0);
    const fbos::sampling::SamplingConfig cfg{env.max_answer_len(), 32, 64};
    batch = fbos::sampling::sample_step_batch(snap, env, task, n, k,
                                              fbos::sampling::StreamKey::make(seed, 0, task.id),
                                              cfg);
    groups = fbos::sampling::assemble_groups(batch);
  }

  AdvantageSet epa_adv() const {
    const auto r = groups.epa.rewards();
    return group_advantages(r, 1e-6);
  }
  std::vector<AdvantageSet> ecc_advs() const {
    std::vector<AdvantageSet> out;
    for (const auto& g : groups.ecc) {
      const auto r = g.rewards();
      out.push_back(group_advantages(r, 1e-6));
    }
    return out;
  }
};

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("group_advantages: [1,0,0,1] gives mu 0.5, sigma 0.5, values [1,-1,-1,1]") {
    const std::vector<double> r{1, 0, 0, 1};
    const auto a = group_advantages(r, 0.0);
    CHECK(a.mean == doctest::Approx(0.5).epsilon(kTol));
    CHECK(a.std == doctest::Approx(0.5).epsilon(kTol));
    const std::vector<double> want{1, -1, -1, 1};
    for (int i = 0; i < 4; ++i) CHECK(std::abs(a.values[i] - want[i]) < kTol);
  }

  TEST_CASE("group_advantages: equal rewards give zeros with and without the stabilizer") {
    const std::vector<double> r{0.7, 0.7, 0.7};
    for (double eps : {0.0, 1e-6}) {
      for (double v : group_advantages(r, eps).values) CHECK(v == 0.0);
    }
    const std::vector<double> one{3.0};
    CHECK(group_advantages(one, 0.0).values == std::vector<double>{0.0});
  }

  TEST_CASE("group_advantages: [3,1,1,1,1,1] matches the closed form") {
    // mu = 4/3, population sigma = sqrt(5)/3.
    const std::vector<double> r{3, 1, 1, 1, 1, 1};
    const auto a = group_advantages(r, 1e-6);
    const long double sigma = std::sqrt(5.0L) / 3.0L;
    const long double denom = sigma + 1e-6L;
    CHECK(std::abs(a.mean - 4.0 / 3.0) < kTol);
    CHECK(std::abs(a.std - static_cast<double>(sigma)) < kTol);
    CHECK(std::abs(a.values[0] - static_cast<double>((5.0L / 3.0L) / denom)) < kTol);
    for (int i = 1; i < 6; ++i) {
      CHECK(std::abs(a.values[i] - static_cast<double>((-1.0L / 3.0L) / denom)) < kTol);
    }
    CHECK(std::abs(std::accumulate(a.values.begin(), a.values.end(), 0.0)) < kTol);
  }

  TEST_CASE("group_advantages rejects an empty group") {
    CHECK_THROWS(group_advantages(std::vector<double>{}, 1e-6));
  }

  TEST_CASE("reweight examples") {
    CHECK(reweight(0.0, 0.1) == 0.0);
    CHECK(std::abs(reweight(1.0, 0.1) - 1.0 / 1.1) < kTol);
    CHECK(std::abs(reweight(1.0, 0.1) - 0.9090909090909091) < kTol);
    CHECK(std::abs(reweight(0.1, 0.1) - 0.5) < kTol);
    CHECK(std::abs(reweight_derivative(0.0, 0.1) - 10.0) < kTol);
  }

  TEST_CASE("clipped_term examples") {
    CHECK(std::abs(clipped_term(1.5, 2.0, 0.2) - 2.4) < kTol);
    CHECK(std::abs(clipped_term(0.5, -1.0, 0.2) - (-0.8)) < kTol);
    for (double rho : {0.8, 0.95, 1.0, 1.1, 1.2}) {
      CHECK(std::abs(clipped_term(rho, 1.7, 0.2) - rho * 1.7) < kTol);
      CHECK(std::abs(clipped_term(rho, -0.3, 0.2) - rho * -0.3) < kTol);
    }
  }

  TEST_CASE("ratio_init: identity at theta_old, ln 2 gap gives 2") {
    auto vocab = small_vocab(2);
    const TokenId c0 = vocab->id("c0"), c1 = vocab->id("c1");
    const std::vector<TokenId> q{c0};
    const std::vector<TokenId> ans{c0};
    auto old = PolicyParams::tabular(vocab, 1);
    for (TokenId t = 0; t < vocab->size(); ++t) set_logit(old, {q, {}}, t, -1000.0);
    set_logit(old, {q, {}}, c0, 0.0);
    set_logit(old, {q, {}}, c1, 0.0);
    CHECK(ratio_init(old, old, q, ans, 0) == 1.0);
    auto theta = old;
    set_logit(theta, {q, {}}, c1, -1000.0);
    // log pi_theta - log pi_old = 0 - ln(1/2) = ln 2.
    CHECK(std::abs(ratio_init(theta, old, q, ans, 0) - 2.0) < 1e-12);
  }

  TEST_CASE("ratio_init matches the recomputed log-prob difference") {
    auto vocab = small_vocab(4, 2);
    Rng rng(11);
    auto old = PolicyParams::linear_bag(vocab);
    for (double& w : old.mutable_weights()) w = rng.normal();
    auto theta = old;
    for (double& w : theta.mutable_weights()) w += 0.2 * rng.normal();
    const std::vector<TokenId> q{4, 6};
    const std::vector<TokenId> ans{5, 7, 4, Vocab::kEos};
    for (std::size_t t = 0; t < ans.size(); ++t) {
      const Context ctx{q, std::span<const TokenId>(ans).first(t)};
      const double expect = std::exp(theta.log_prob(ctx, ans[t]) - old.log_prob(ctx, ans[t]));
      CHECK(std::abs(ratio_init(theta, old, q, ans, t) - expect) < 1e-12);
      CHECK(ratio_init(old, old, q, ans, t) == 1.0);
    }
  }

  TEST_CASE("ratio_fap: hand-set logits give pi(.|q) / pi(.|q~) = 1.5 at theta_old") {
    auto vocab = small_vocab(2);
    const TokenId c0 = vocab->id("c0"), c1 = vocab->id("c1");
    auto p = PolicyParams::tabular(vocab, 1);
    const std::vector<TokenId> q{c0};
    const std::vector<TokenId> fap{c0, Vocab::kSepAnswer, c1, Vocab::kSepFeedback, Vocab::kSepEnd};
    for (const auto& prompt : {q, fap}) {
      for (TokenId t = 0; t < vocab->size(); ++t) set_logit(p, {prompt, {}}, t, -1000.0);
      set_logit(p, {prompt, {}}, c0, 0.0);
    }
    set_logit(p, {q, {}}, c1, std::log(3.0));  // pi(c1 | q) = 3/4
    set_logit(p, {fap, {}}, c1, 0.0);          // pi(c1 | q~) = 1/2
    const std::vector<TokenId> ans{c1};
    CHECK(std::abs(ratio_fap(p, p, q, fap, ans, 0) - 1.5) < 1e-12);
    CHECK(ratio_fap(p, p, q, fap, ans, 0) != 1.0);
    // q~ = q collapses to the same-prompt ratio.
    CHECK(ratio_fap(p, p, q, q, ans, 0) == 1.0);
    CHECK(ratio_ecc(p, p, fap, ans, 0) == 1.0);
  }

  TEST_CASE("epa_loss: zero advantages annihilate loss and gradient") {
    BatchFixture f(3, 2, 5);
    auto adv = f.epa_adv();
    std::fill(adv.values.begin(), adv.values.end(), 0.0);
    auto theta = f.old;
    theta.mutable_weights()[3] += 0.5;
    const auto rep = epa_loss(theta, f.batch, adv, {});
    CHECK(rep.loss == 0.0);
    for (double g : rep.grad) CHECK(g == 0.0);
  }

  TEST_CASE("epa_loss: single init rollout with A=1 at theta_old contributes -1/N") {
    BatchFixture f(4, 3, 8);
    auto adv = f.epa_adv();
    std::fill(adv.values.begin(), adv.values.end(), 0.0);
    adv.values[0] = 1.0;
    const auto rep = epa_loss(f.old, f.batch, adv, {});
    const double n_total = f.batch.total();
    REQUIRE(rep.rollout_loss.size() == static_cast<std::size_t>(f.batch.total()));
    CHECK(std::abs(rep.rollout_loss[0] - (-1.0 / n_total)) < 1e-12);
    CHECK(std::abs(rep.loss - (-1.0 / n_total)) < 1e-12);
    CHECK(rep.clipped_fraction[0] == 0.0);
  }

  TEST_CASE("epa_loss rejects an advantage set of the wrong size") {
    BatchFixture f(2, 2, 3);
    auto adv = f.epa_adv();
    adv.values.pop_back();
    CHECK_THROWS(epa_loss(f.old, f.batch, adv, {}));
  }

  TEST_CASE("ecc_loss: zero at theta_old with a nonzero gradient") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      BatchFixture f(3, 4, seed);
      const auto advs = f.ecc_advs();
      const auto rep = ecc_loss(f.old, f.groups.ecc, advs, {});
      CHECK(std::abs(rep.loss) < 1e-12);
      // Every ratio is exactly 1 on-policy.
      for (const auto& r : f.batch.fap_rollouts) {
        for (std::size_t t = 0; t < r.tokens.size(); ++t) {
          CHECK(ratio_ecc(f.old, f.old, r.conditioning_prompt, r.tokens, t) == 1.0);
        }
      }
      bool any_signal = false;
      for (const auto& a : advs) {
        for (double v : a.values) any_signal |= v != 0.0;
      }
      if (any_signal) {
        double norm = 0.0;
        for (double g : rep.grad) norm += g * g;
        CHECK(norm > 0.0);
      }
    }
  }

  TEST_CASE("ecc_loss: a group with identical rewards contributes nothing") {
    BatchFixture f(2, 3, 4);
    auto advs = f.ecc_advs();
    auto theta = f.old;
    Rng rng(1);
    for (double& w : theta.mutable_weights()) w += 0.3 * rng.normal();
    const std::vector<double> flat(3, 0.25);
    advs[0] = group_advantages(flat, 1e-6);
    const auto both = ecc_loss(theta, f.groups.ecc, advs, {});
    const auto only_second =
        ecc_loss(theta, std::span(f.groups.ecc).subspan(1), std::span(advs).subspan(1), {});
    // Two groups average with weight 1/2, the single group with weight 1.
    CHECK(std::abs(both.loss - 0.5 * only_second.loss) < 1e-12);
    for (std::size_t i = 0; i < both.grad.size(); ++i) {
      CHECK(std::abs(both.grad[i] - 0.5 * only_second.grad[i]) < 1e-12);
    }
  }

  TEST_CASE("identity reweight changes only the FAP term of EPA") {
    BatchFixture f(3, 3, 12);
    auto theta = f.old;
    Rng rng(2);
    for (double& w : theta.mutable_weights()) w += 0.2 * rng.normal();
    const auto adv = f.epa_adv();
    ClipConfig identity;
    identity.reweight = Reweight::kIdentity;
    const auto a = epa_loss(theta, f.batch, adv, {});
    const auto b = epa_loss(theta, f.batch, adv, identity);
    for (int i = 0; i < f.batch.n; ++i) CHECK(a.rollout_loss[i] == b.rollout_loss[i]);
    bool fap_changed = false;
    for (std::size_t i = f.batch.n; i < a.rollout_loss.size(); ++i) {
      fap_changed |= a.rollout_loss[i] != b.rollout_loss[i];
    }
    CHECK(fap_changed);
    const auto advs = f.ecc_advs();
    const auto e1 = ecc_loss(theta, f.groups.ecc, advs, {});
    const auto e2 = ecc_loss(theta, f.groups.ecc, advs, identity);
    CHECK(e1.loss == e2.loss);
    CHECK(e1.grad == e2.grad);
  }

  TEST_CASE("analytic gradients match central differences on random instances") {
    fbos::gradcheck::Config cfg;
    cfg.instances = 30;
    cfg.seed = 77;
    const auto report = fbos::gradcheck::run(cfg);
    CHECK(report.results.size() == 30);
    CHECK(report.max_rel_error() < 1e-5);
    CHECK(report.passed());
  }

  TEST_CASE("gradcheck catches a sign flip in the cross-prompt ratio gradient") {
    fbos::gradcheck::Config cfg;
    cfg.instances = 10;
    cfg.fault = Fault::kFlipFapRatioGradient;
    const auto report = fbos::gradcheck::run(cfg);
    CHECK_FALSE(report.passed());
    CHECK_FALSE(report.failing_seeds().empty());
  }

  TEST_CASE("gradcheck is deterministic under its seed") {
    fbos::gradcheck::Config cfg;
    cfg.instances = 5;
    const auto a = fbos::gradcheck::run(cfg);
    const auto b = fbos::gradcheck::run(cfg);
    for (std::size_t i = 0; i < a.results.size(); ++i) {
      CHECK(a.results[i].seed == b.results[i].seed);
      CHECK(a.results[i].epa_rel_error == b.results[i].epa_rel_error);
    }
  }

  TEST_CASE("clip configuration is validated") {
    ClipConfig bad;
    bad.epsilon = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = {};
    bad.reweight_c = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}
