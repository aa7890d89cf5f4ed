#include "fbos/vocab.hpp"

#include <stdexcept>

namespace fbos {

Vocab::Builder::Builder() {
  add("<eos>", TokenClass::kEos);
  add("<sep:ans>", TokenClass::kSeparator);
  add("<sep:fb>", TokenClass::kSeparator);
  add("<sep:end>", TokenClass::kSeparator);
}

TokenId Vocab::Builder::add(std::string name, TokenClass cls, int position) {
  if (name.empty()) throw std::invalid_argument("vocab: empty token name");
  if ((cls == TokenClass::kPosition) != (position >= 0)) {
    throw std::invalid_argument("vocab: position index must accompany exactly "
                                "the position tokens (" + name + ")");
  }
  names_.push_back(std::move(name));
  classes_.push_back(cls);
  positions_.push_back(position);
  return static_cast<TokenId>(names_.size() - 1);
}

Vocab Vocab::Builder::build() && {
  Vocab v;
  v.names_ = std::move(names_);
  v.classes_ = std::move(classes_);
  v.positions_ = std::move(positions_);
  if (v.names_.size() < 2) throw std::invalid_argument("vocab: |V| < 2");
  for (std::size_t i = 0; i < v.names_.size(); ++i) {
    auto [it, inserted] = v.index_.emplace(v.names_[i], static_cast<TokenId>(i));
    if (!inserted) throw std::invalid_argument("vocab: duplicate token " + v.names_[i]);
    if (const int p = v.positions_[i]; p >= 0) {
      if (static_cast<std::size_t>(p) >= v.position_tokens_.size()) {
        v.position_tokens_.resize(p + 1, -1);
      }
      if (v.position_tokens_[p] != -1) {
        throw std::invalid_argument("vocab: duplicate position token");
      }
      v.position_tokens_[p] = static_cast<TokenId>(i);
    }
  }
  return v;
}

const std::string& Vocab::name(TokenId id) const {
  check(id);
  return names_[id];
}

TokenId Vocab::id(std::string_view name) const {
  if (auto found = find(name)) return *found;
  throw std::out_of_range("vocab: unknown token '" + std::string(name) + "'");
}

std::optional<TokenId> Vocab::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenClass Vocab::token_class(TokenId id) const {
  check(id);
  return classes_[id];
}

std::optional<int> Vocab::position_of(TokenId id) const {
  if (!contains(id) || positions_[id] < 0) return std::nullopt;
  return positions_[id];
}

std::optional<TokenId> Vocab::position_token(int position) const {
  if (position < 0 || static_cast<std::size_t>(position) >= position_tokens_.size() ||
      position_tokens_[position] < 0) {
    return std::nullopt;
  }
  return position_tokens_[position];
}

void Vocab::check(TokenId id) const {
  if (!contains(id)) {
    throw std::domain_error("token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(size()));
  }
}

std::string_view to_string(TokenClass cls) {
  switch (cls) {
    case TokenClass::kEos: return "eos";
    case TokenClass::kSeparator: return "separator";
    case TokenClass::kContent: return "content";
    case TokenClass::kPosition: return "position";
    case TokenClass::kFeedbackKind: return "feedback_kind";
    case TokenClass::kPrompt: return "prompt";
  }
  return "?";
}

TokenClass token_class_from_string(std::string_view s) {
  for (auto cls : {TokenClass::kEos, TokenClass::kSeparator, TokenClass::kContent,
                   TokenClass::kPosition, TokenClass::kFeedbackKind, TokenClass::kPrompt}) {
    if (to_string(cls) == s) return cls;
  }
  throw std::invalid_argument("unknown token class '" + std::string(s) + "'");
}

}  // namespace fbos
