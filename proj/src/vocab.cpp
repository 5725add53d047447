#include "memprobe/vocab.hpp"

#include "memprobe/error.hpp"

namespace memprobe {

Vocabulary::Vocabulary() {
  add_token(std::string(kUnkToken));
  add_token(std::string(kEosToken));
}

Vocabulary Vocabulary::from_token_list(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kEosToken) {
    throw ConfigError("vocabulary list must start with <unk>, <eos>");
  }
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) {
      throw ConfigError("duplicate token in vocabulary list: " + tokens[i]);
    }
    v.add_token(std::move(tokens[i]));
  }
  return v;
}

TokenId Vocabulary::add_token(std::string token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const TokenId id = static_cast<TokenId>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.find(std::string(token)) != ids_.end();
}

}  // namespace memprobe
