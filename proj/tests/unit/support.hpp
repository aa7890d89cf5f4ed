#ifndef FBOS_TESTS_SUPPORT_HPP_
#define FBOS_TESTS_SUPPORT_HPP_

#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fbos/policy.hpp"
#include "fbos/vocab.hpp"

namespace fbos::testing {

// EOS, the three separators, then `content` answer tokens c0.. and
// `positions` locus tokens @0..
inline std::shared_ptr<const Vocab> small_vocab(int content, int positions = 0) {
  Vocab::Builder b;
  for (int i = 0; i < content; ++i) b.add(fmt::format("c{}", i), TokenClass::kContent);
  if (positions > 0) b.add("fb", TokenClass::kFeedbackKind);
  for (int i = 0; i < positions; ++i) b.add(fmt::format("@{}", i), TokenClass::kPosition, i);
  return std::make_shared<const Vocab>(std::move(b).build());
}

// Sets the logit of `token` in every weight row active for `ctx`.
inline void set_logit(policy::PolicyParams& p, const policy::Context& ctx, TokenId token,
                      double value) {
  std::vector<policy::ActiveFeature> feats;
  p.active_features(ctx, feats);
  auto w = p.mutable_weights();
  const int v = p.vocab().size();
  for (const auto& f : feats) w[static_cast<std::size_t>(f.row) * v + token] = value;
}

}  // namespace fbos::testing

#endif  // FBOS_TESTS_SUPPORT_HPP_
