#include "memprobe/memometrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace memprobe {

bool verbatim_memorized(std::span<const TokenId> generated, std::span<const TokenId> target) {
  if (target.empty() || generated.empty()) return false;
  const bool target_hit_eos = target.back() == kEosId;
  if (target_hit_eos) {
    return generated.size() == target.size() && std::equal(target.begin(), target.end(), generated.begin());
  }
  if (generated.size() < target.size()) return false;
  return std::equal(target.begin(), target.end(), generated.begin());
}

namespace {

// n-grams packed as token-id strings for exact map keys.
using NGramKey = std::u32string;

NGramKey make_key(std::span<const TokenId> tokens, std::size_t start, std::size_t n) {
  NGramKey key;
  key.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    key.push_back(static_cast<char32_t>(static_cast<std::uint32_t>(tokens[start + i])));
  }
  return key;
}

}  // namespace

double bleu4(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  if (reference.empty()) return 0.0;
  if (candidate.empty()) return 0.0;

  double log_precision_sum = 0.0;
  int orders_used = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (candidate.size() < n) break;  // no candidate n-grams at this order or beyond
    std::unordered_map<NGramKey, std::int64_t> ref_counts;
    if (reference.size() >= n) {
      for (std::size_t i = 0; i + n <= reference.size(); ++i) {
        ++ref_counts[make_key(reference, i, n)];
      }
    }
    std::unordered_map<NGramKey, std::int64_t> cand_counts;
    for (std::size_t i = 0; i + n <= candidate.size(); ++i) {
      ++cand_counts[make_key(candidate, i, n)];
    }
    std::int64_t clipped = 0;
    std::int64_t total = 0;
    for (const auto& [key, count] : cand_counts) {
      total += count;
      const auto it = ref_counts.find(key);
      if (it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    if (clipped == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    ++orders_used;
  }
  if (orders_used == 0) return 0.0;

  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double brevity = c < r ? std::exp(1.0 - r / c) : 1.0;
  return brevity * std::exp(log_precision_sum / static_cast<double>(orders_used));
}

double soft_memorization_score(std::span<const TokenId> generated, std::span<const TokenId> target) {
  return bleu4(generated, target);
}

}  // namespace memprobe
