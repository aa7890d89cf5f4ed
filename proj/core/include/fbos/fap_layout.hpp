#ifndef FBOS_FAP_LAYOUT_HPP_
#define FBOS_FAP_LAYOUT_HPP_

#include <span>
#include <vector>

#include "fbos/vocab.hpp"

namespace fbos {

// The three segments of a feedback-augmented prompt
//   q <sep:ans> ans <sep:fb> F <sep:end>
// Plain prompts have no <sep:ans> and parse as base only.
struct FapSegments {
  std::span<const TokenId> base;
  std::span<const TokenId> answer;
  std::span<const TokenId> feedback;
  bool is_fap = false;
};

// q and F never contain separators, but a sampled answer may, so the answer
// is delimited by the first <sep:ans> and the last <sep:fb>.
FapSegments split_fap(std::span<const TokenId> prompt);

// One feedback entry: a feedback-kind token followed by its detail tokens.
struct FeedbackEntry {
  std::span<const TokenId> tokens;
  int locus = -1;  // first position token in the entry, -1 if none
};

std::vector<FeedbackEntry> split_feedback(std::span<const TokenId> feedback,
                                          const Vocab& vocab);

}  // namespace fbos

#endif  // FBOS_FAP_LAYOUT_HPP_
