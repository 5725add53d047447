#include "memprobe/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

namespace memprobe {

namespace {

inline bool is_space_byte(unsigned char c) { return c < 0x80 && std::isspace(c); }

inline bool is_punct_byte(unsigned char c) { return c < 0x80 && std::ispunct(c); }

}  // namespace

std::vector<std::string> split_text(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (is_space_byte(c)) {
      flush();
    } else if (is_punct_byte(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSeq ids;
  for (const std::string& piece : split_text(text)) {
    ids.push_back(vocab.id_of(piece));
  }
  ids.push_back(kEosId);
  return ids;
}

Vocabulary build_vocab(const std::vector<std::string>& texts) {
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const std::string& text : texts) {
    for (std::string& piece : split_text(text)) {
      ++freq[std::move(piece)];
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (auto& [token, count] : items) {
    vocab.add_token(std::move(token));
  }
  return vocab;
}

}  // namespace memprobe
