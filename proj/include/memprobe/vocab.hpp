#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memprobe {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kUnkId = 0;
inline constexpr TokenId kEosId = 1;
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kEosToken = "<eos>";

/// Closed vocabulary with dense ids 0..V-1. <unk> and <eos> always occupy
/// ids 0 and 1.
class Vocabulary {
 public:
  Vocabulary();

  /// Rebuild from an ordered token list (e.g. a model file). The list must
  /// start with <unk>, <eos> and contain no duplicates.
  static Vocabulary from_token_list(std::vector<std::string> tokens);

  /// Appends a token and returns its id; returns the existing id if present.
  TokenId add_token(std::string token);

  /// kUnkId when the token is not in the vocabulary.
  TokenId id_of(std::string_view token) const;

  bool contains(std::string_view token) const;

  const std::string& token(TokenId id) const { return tokens_[static_cast<std::size_t>(id)]; }

  std::int32_t size() const { return static_cast<std::int32_t>(tokens_.size()); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace memprobe
