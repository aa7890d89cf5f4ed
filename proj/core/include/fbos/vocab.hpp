#ifndef FBOS_VOCAB_HPP_
#define FBOS_VOCAB_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fbos {

using TokenId = std::int32_t;

enum class TokenClass : std::uint8_t {
  kEos,
  kSeparator,
  kContent,       // tokens an answer is made of
  kPosition,      // locus markers used by prompts and feedback
  kFeedbackKind,  // first token of every feedback entry
  kPrompt,        // prompt-only structure tokens
};

// Ordered token inventory shared by a policy and the environment that
// scores it. The first four ids are always EOS and the three FAP separators.
class Vocab {
 public:
  static constexpr TokenId kEos = 0;
  static constexpr TokenId kSepAnswer = 1;    // q | ans
  static constexpr TokenId kSepFeedback = 2;  // ans | F
  static constexpr TokenId kSepEnd = 3;       // closes F

  class Builder {
   public:
    Builder();
    TokenId add(std::string name, TokenClass cls, int position = -1);
    Vocab build() &&;

   private:
    std::vector<std::string> names_;
    std::vector<TokenClass> classes_;
    std::vector<int> positions_;
  };

  int size() const { return static_cast<int>(names_.size()); }
  bool contains(TokenId id) const { return id >= 0 && id < size(); }

  const std::string& name(TokenId id) const;
  TokenId id(std::string_view name) const;  // throws std::out_of_range
  std::optional<TokenId> find(std::string_view name) const;
  TokenClass token_class(TokenId id) const;

  bool is_separator(TokenId id) const {
    return id == kSepAnswer || id == kSepFeedback || id == kSepEnd;
  }

  // Position index carried by a kPosition token.
  std::optional<int> position_of(TokenId id) const;
  std::optional<TokenId> position_token(int position) const;

  // Throws std::domain_error if id is outside the vocabulary.
  void check(TokenId id) const;

  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.names_ == b.names_ && a.classes_ == b.classes_ &&
           a.positions_ == b.positions_;
  }

 private:
  Vocab() = default;

  std::vector<std::string> names_;
  std::vector<TokenClass> classes_;
  std::vector<int> positions_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TokenId> position_tokens_;
};

std::string_view to_string(TokenClass cls);
TokenClass token_class_from_string(std::string_view s);

}  // namespace fbos

#endif  // FBOS_VOCAB_HPP_
