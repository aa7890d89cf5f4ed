#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "fbos/checkpoint.hpp"
#include "fbos/policy.hpp"
#include "fbos/rng.hpp"
#include "fbos/sampling.hpp"
#include "support.hpp"

using fbos::Rng;
using fbos::TokenId;
using fbos::Vocab;
using fbos::policy::Context;
using fbos::policy::PolicyParams;
using fbos::policy::PolicySnapshot;
using fbos::testing::set_logit;
using fbos::testing::small_vocab;

namespace {

constexpr double kTol = 1e-12;

double logsumexp_of_logprobs(const PolicyParams& p, const Context& ctx) {
  double m = -INFINITY;
  std::vector<double> lp;
  for (TokenId t = 0; t < p.vocab().size(); ++t) lp.push_back(p.log_prob(ctx, t));
  for (double x : lp) m = std::max(m, x);
  double s = 0.0;
  for (double x : lp) s += std::exp(x - m);
  return m + std::log(s);
}

// Only c0 and c1 carry mass, so the policy behaves like |V| = 2.
PolicyParams two_token_policy(const std::shared_ptr<const Vocab>& vocab, double logit_c1) {
  auto p = PolicyParams::tabular(vocab, 1);
  const TokenId c0 = vocab->id("c0"), c1 = vocab->id("c1");
  const std::vector<TokenId> prompts[] = {{c0}, {c1}};
  for (const auto& q : prompts) {
    const Context ctx{q, {}};
    for (TokenId t = 0; t < vocab->size(); ++t) set_logit(p, ctx, t, -1000.0);
    set_logit(p, ctx, c0, 0.0);
    set_logit(p, ctx, c1, logit_c1);
  }
  return p;
}

}  // namespace

TEST_SUITE("policy") {
  TEST_CASE("uniform tabular policy gives -ln|V| everywhere") {
    auto vocab = small_vocab(4);
    const auto p = PolicyParams::tabular(vocab, 2);
    const std::vector<TokenId> q{4, 5, 6};
    const std::vector<TokenId> prefix{7};
    for (TokenId t = 0; t < vocab->size(); ++t) {
      CHECK(p.log_prob({q, prefix}, t) == doctest::Approx(-std::log(8.0)).epsilon(kTol));
      CHECK(p.log_prob({{}, {}}, t) == doctest::Approx(-std::log(8.0)).epsilon(kTol));
    }
  }

  TEST_CASE("logits (0, ln 3) give log-probs (ln 1/4, ln 3/4)") {
    auto vocab = small_vocab(2);
    const auto p = two_token_policy(vocab, std::log(3.0));
    const std::vector<TokenId> q{vocab->id("c0")};
    CHECK(std::abs(p.log_prob({q, {}}, vocab->id("c0")) - std::log(0.25)) < kTol);
    CHECK(std::abs(p.log_prob({q, {}}, vocab->id("c1")) - std::log(0.75)) < kTol);
  }

  TEST_CASE("log-probs normalize for random policies of both kinds") {
    auto vocab = small_vocab(5, 3);
    Rng rng(17);
    for (auto p : {PolicyParams::tabular(vocab, 2), PolicyParams::linear_bag(vocab, {4})}) {
      for (double& w : p.mutable_weights()) w = 3.0 * rng.normal();
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<TokenId> q, prefix;
        for (int i = 0; i < 3; ++i) q.push_back(4 + static_cast<TokenId>(rng.below(5)));
        for (int i = 0; i < static_cast<int>(rng.below(4)); ++i) {
          prefix.push_back(static_cast<TokenId>(rng.below(vocab->size())));
        }
        CHECK(std::abs(logsumexp_of_logprobs(p, {q, prefix})) < kTol);
      }
    }
  }

  TEST_CASE("unknown token id is a domain error") {
    auto vocab = small_vocab(2);
    const auto p = PolicyParams::tabular(vocab, 1);
    CHECK_THROWS_AS(p.log_prob({{}, {}}, vocab->size()), std::domain_error);
    CHECK_THROWS_AS(p.log_prob({{}, {}}, -1), std::domain_error);
    CHECK_THROWS_AS(p.log_prob_grad({{}, {}}, 99), std::domain_error);
    CHECK_THROWS_AS(p.entropy({{}, std::vector<TokenId>{42}}), std::domain_error);
  }

  TEST_CASE("uniform |V|=4 gradient is 0.75 at the token and -0.25 elsewhere") {
    Vocab::Builder b;  // the four reserved tokens only
    auto vocab = std::make_shared<const Vocab>(std::move(b).build());
    const auto p = PolicyParams::tabular(vocab, 1);
    const Context ctx{{}, {}};
    const auto g = p.log_prob_grad(ctx, 2);
    std::vector<fbos::policy::ActiveFeature> feats;
    p.active_features(ctx, feats);
    REQUIRE(feats.size() == 1);
    const std::size_t row = static_cast<std::size_t>(feats[0].row) * 4;
    double sum = 0.0;
    for (int v = 0; v < 4; ++v) {
      CHECK(g.at(row + v) == doctest::Approx(v == 2 ? 0.75 : -0.25).epsilon(kTol));
      sum += g.at(row + v);
    }
    CHECK(std::abs(sum) < kTol);
  }

  TEST_CASE("gradient entries of the active row sum to zero") {
    auto vocab = small_vocab(5, 2);
    Rng rng(3);
    auto p = PolicyParams::tabular(vocab, 2);
    for (double& w : p.mutable_weights()) w = rng.normal();
    const std::vector<TokenId> q{4, 6};
    const auto g = p.log_prob_grad({q, {}}, 5);
    double sum = 0.0;
    for (const auto& e : g.entries) sum += e.value;
    CHECK(std::abs(sum) < kTol);
  }

  TEST_CASE("linear-bag gradient matches central differences") {
    auto vocab = small_vocab(4, 3);
    Rng rng(5);
    auto p = PolicyParams::linear_bag(vocab, {2});
    REQUIRE(p.num_params() <= 2000);
    for (double& w : p.mutable_weights()) w = 0.5 * rng.normal();
    const std::vector<TokenId> q{4, 5, Vocab::kSepAnswer, 6, Vocab::kSepFeedback,
                                 vocab->id("fb"), vocab->id("@1"), 7, Vocab::kSepEnd};
    const std::vector<TokenId> prefix{5};
    const Context ctx{q, prefix};
    const TokenId tok = 6;
    const auto g = p.log_prob_grad(ctx, tok);
    const double h = 1e-5;
    double max_err = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < p.num_params(); ++i) {
      auto w = p.mutable_weights();
      const double saved = w[i];
      w[i] = saved + h;
      const double up = p.log_prob(ctx, tok);
      w[i] = saved - h;
      const double down = p.log_prob(ctx, tok);
      w[i] = saved;
      const double fd = (up - down) / (2 * h);
      max_err = std::max(max_err, std::abs(fd - g.at(i)));
      max_abs = std::max(max_abs, std::abs(g.at(i)));
    }
    CHECK(max_abs > 0.1);
    CHECK(max_err / max_abs < 1e-6);
  }

  TEST_CASE("entropy examples") {
    auto vocab = small_vocab(4);
    const auto uniform = PolicyParams::tabular(vocab, 1);
    CHECK(uniform.entropy({{}, {}}) == doctest::Approx(std::log(8.0)).epsilon(kTol));
    CHECK(std::abs(std::log(8.0) - 2.0794415416798357) < kTol);

    auto vocab2 = small_vocab(2);
    const auto p = two_token_policy(vocab2, std::log(3.0));
    const std::vector<TokenId> q{vocab2->id("c1")};
    const double expected = -0.25 * std::log(0.25) - 0.75 * std::log(0.75);
    CHECK(std::abs(p.entropy({q, {}}) - expected) < kTol);

    auto det = two_token_policy(vocab2, 1000.0);
    CHECK(std::abs(det.entropy({q, {}})) < kTol);
  }

  TEST_CASE("near-deterministic policy samples the greedy sequence") {
    auto vocab = small_vocab(3);
    auto p = PolicyParams::tabular(vocab, 1);
    const TokenId c0 = vocab->id("c0"), c1 = vocab->id("c1"), c2 = vocab->id("c2");
    set_logit(p, {std::vector<TokenId>{c0}, {}}, c1, 60.0);
    set_logit(p, {std::vector<TokenId>{c1}, {}}, c2, 60.0);
    set_logit(p, {std::vector<TokenId>{c2}, {}}, Vocab::kEos, 60.0);
    const PolicySnapshot snap(p, 0);
    const std::vector<TokenId> q{c0};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto s = fbos::sampling::sample_rollout(snap, q, 8, rng);
      CHECK(s.tokens == std::vector<TokenId>{c1, c2, Vocab::kEos});
    }
  }

  TEST_CASE("sampling is deterministic and stores exact behavior log-probs") {
    auto vocab = small_vocab(4, 2);
    Rng init(9);
    auto p = PolicyParams::linear_bag(vocab);
    for (double& w : p.mutable_weights()) w = init.normal();
    const PolicySnapshot snap(p, 3);
    const std::vector<TokenId> q{4, 5, 7};
    Rng a(123), b(123);
    const auto s1 = fbos::sampling::sample_rollout(snap, q, 6, a);
    const auto s2 = fbos::sampling::sample_rollout(snap, q, 6, b);
    CHECK(s1.tokens == s2.tokens);
    CHECK(s1.logprobs == s2.logprobs);
    REQUIRE(s1.tokens.size() == s1.logprobs.size());
    for (std::size_t t = 0; t < s1.tokens.size(); ++t) {
      const std::span<const TokenId> prefix(s1.tokens.data(), t);
      CHECK(std::abs(s1.logprobs[t] - p.log_prob({q, prefix}, s1.tokens[t])) < kTol);
    }
  }

  TEST_CASE("two-token uniform policy: 8 sequences of length 3 are uniform") {
    // Exact enumeration: every sequence has probability 1/8.
    auto vocab = small_vocab(2);
    const auto p = two_token_policy(vocab, 0.0);
    const PolicySnapshot snap(p, 0);
    const std::vector<TokenId> q{vocab->id("c0")};
    constexpr int kSamples = 100000;
    std::map<std::vector<TokenId>, int> counts;
    Rng rng(2024);
    for (int s = 0; s < kSamples; ++s) {
      counts[fbos::sampling::sample_rollout(snap, q, 3, rng).tokens]++;
    }
    REQUIRE(counts.size() == 8);
    const double expected = kSamples / 8.0;
    const double sigma = std::sqrt(kSamples * 0.125 * 0.875);
    for (const auto& [seq, c] : counts) {
      CHECK(seq.size() == 3);
      CHECK(std::abs(c - expected) < 3.0 * sigma);
    }
  }

  TEST_CASE("snapshot is unaffected by later updates to the live parameters") {
    auto vocab = small_vocab(3);
    auto p = PolicyParams::linear_bag(vocab);
    const PolicySnapshot snap(p, 0);
    const std::vector<TokenId> q{4, 5};
    const double before = snap.params().log_prob({q, {}}, 6);
    for (double& w : p.mutable_weights()) w += 1.5;
    p.mutable_weights()[7] = -4.0;
    CHECK(snap.params().log_prob({q, {}}, 6) == before);
    CHECK(snap.step_id() == 0);
  }

  TEST_CASE("zero initialization is uniform for the linear bag") {
    auto vocab = small_vocab(6, 4);
    const auto p = PolicyParams::linear_bag(vocab);
    for (double w : p.weights()) CHECK(w == 0.0);
    const std::vector<TokenId> q{4, 9};
    CHECK(p.entropy({q, {}}) == doctest::Approx(std::log(vocab->size())).epsilon(kTol));
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    auto vocab = small_vocab(4, 3);
    Rng rng(77);
    for (auto p : {PolicyParams::tabular(vocab, 2), PolicyParams::linear_bag(vocab, {5})}) {
      for (double& w : p.mutable_weights()) w = rng.normal() * 1e3 + 1e-300;
      p.set_temperature(0.7);
      std::stringstream buf;
      fbos::policy::write_checkpoint(p, buf);
      const auto back = fbos::policy::read_checkpoint(buf);
      CHECK(back == p);
      CHECK(back.vocab() == p.vocab());
    }
  }

  TEST_CASE("corrupt checkpoint is rejected") {
    std::stringstream buf("FBOSCKPX garbage");
    CHECK_THROWS(fbos::policy::read_checkpoint(buf));
  }
}
