#include "fbos/fap_layout.hpp"

#include <algorithm>

namespace fbos {

FapSegments split_fap(std::span<const TokenId> prompt) {
  FapSegments seg;
  const auto first_ans = std::find(prompt.begin(), prompt.end(), Vocab::kSepAnswer);
  if (first_ans == prompt.end()) {
    seg.base = prompt;
    return seg;
  }
  seg.is_fap = true;
  const std::size_t ans_begin = static_cast<std::size_t>(first_ans - prompt.begin());
  seg.base = prompt.first(ans_begin);

  std::size_t end = prompt.size();
  if (end > ans_begin + 1 && prompt[end - 1] == Vocab::kSepEnd) --end;

  std::size_t fb_sep = end;
  for (std::size_t i = end; i > ans_begin + 1; --i) {
    if (prompt[i - 1] == Vocab::kSepFeedback) {
      fb_sep = i - 1;
      break;
    }
  }
  seg.answer = prompt.subspan(ans_begin + 1, fb_sep - ans_begin - 1);
  if (fb_sep < end) seg.feedback = prompt.subspan(fb_sep + 1, end - fb_sep - 1);
  return seg;
}

std::vector<FeedbackEntry> split_feedback(std::span<const TokenId> feedback,
                                          const Vocab& vocab) {
  std::vector<FeedbackEntry> entries;
  std::size_t start = 0;
  auto flush = [&](std::size_t stop) {
    if (stop <= start) return;
    FeedbackEntry e;
    e.tokens = feedback.subspan(start, stop - start);
    for (TokenId tok : e.tokens) {
      if (auto p = vocab.position_of(tok)) {
        e.locus = *p;
        break;
      }
    }
    entries.push_back(e);
  };
  for (std::size_t i = 0; i < feedback.size(); ++i) {
    if (i > start && vocab.contains(feedback[i]) &&
        vocab.token_class(feedback[i]) == TokenClass::kFeedbackKind) {
      flush(i);
      start = i;
    }
  }
  flush(feedback.size());
  return entries;
}

}  // namespace fbos
