#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "memprobe/vocab.hpp"

namespace memprobe {

/// Next-token-distribution interface; the model f under measurement.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::int32_t vocab_size() const = 0;

  /// Full-support probability vector over the vocabulary (sums to 1 within
  /// 1e-9, every entry > 0). Only the last order-1 context tokens matter.
  virtual std::vector<double> next_distribution(std::span<const TokenId> context) const = 0;

  /// P(token | context). Default routes through next_distribution; models
  /// with a cheaper path may override.
  virtual double token_probability(std::span<const TokenId> context, TokenId token) const;
};

struct NGramParams {
  std::int32_t order = 4;    // N >= 1
  double alpha = 0.01;       // additive smoothing of the unigram base
  double lambda = 0.1;       // interpolation weight of the lower order
  void validate() const;     // throws ConfigError
};

namespace detail {

struct TokenSeqHash {
  std::size_t operator()(const TokenSeq& v) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (TokenId t : v) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(t));
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Successor counts of one context, frozen after training: sorted by token
/// id, with the context total cached.
struct ContextCounts {
  std::uint64_t total = 0;
  std::vector<std::pair<TokenId, std::uint64_t>> successors;

  std::uint64_t count_of(TokenId token) const;
};

using CountTable = std::unordered_map<TokenSeq, ContextCounts, TokenSeqHash>;

}  // namespace detail

/// Interpolated additively-smoothed n-gram model (Jelinek-Mercer over a
/// smoothed unigram base):
///
///   P_0(w)       = (c(w) + alpha) / (T + alpha * V)
///   P_k(w | ctx) = (1 - lambda) * ML_k(w | ctx) + lambda * P_{k-1}(w | ctx')
///
/// with ML_k(w | ctx) = c(ctx, w) / c(ctx, .), falling back to P_{k-1} when
/// the context was never seen. next_distribution returns P_{N-1} over the
/// last N-1 context tokens; shorter contexts use the matching lower order.
class NGramModel final : public LanguageModel {
 public:
  NGramModel(Vocabulary vocab, NGramParams params);

  std::int32_t vocab_size() const override { return vocab_.size(); }
  std::vector<double> next_distribution(std::span<const TokenId> context) const override;
  double token_probability(std::span<const TokenId> context, TokenId token) const override;

  const Vocabulary& vocab() const { return vocab_; }
  const NGramParams& params() const { return params_; }

  /// Count tables per context length 0..N-1 (level 0 holds the unigram
  /// counts under the empty context).
  const std::vector<detail::CountTable>& levels() const { return levels_; }

  bool counts_equal(const NGramModel& other) const;

  friend NGramModel train(std::span<const std::span<const TokenId>> copies, Vocabulary vocab,
                          const NGramParams& params);
  friend NGramModel train_parallel(std::span<const std::span<const TokenId>> copies, Vocabulary vocab,
                                   const NGramParams& params, int jobs);
  friend NGramModel load_model(const std::filesystem::path& path);

 private:
  void rebuild_unigram_cache();

  Vocabulary vocab_;
  NGramParams params_;
  std::vector<detail::CountTable> levels_;
  std::vector<double> unigram_probs_;  // P_0, cached
};

/// Single counting pass over the materialized copies (one copy = one
/// document instance; counts never cross the copy boundary). Serial
/// reference implementation.
NGramModel train(std::span<const std::span<const TokenId>> copies, Vocabulary vocab, const NGramParams& params);

/// OpenMP-sharded counting with associative merge; the result is identical
/// to the serial fold. jobs <= 0 means all available threads.
NGramModel train_parallel(std::span<const std::span<const TokenId>> copies, Vocabulary vocab,
                          const NGramParams& params, int jobs = 0);

/// exp of mean negative log-probability per token; the context window resets
/// after each <eos> (documents are scored independently).
double perplexity(const LanguageModel& model, std::span<const TokenId> tokens, std::int32_t order);
double perplexity(const NGramModel& model, std::span<const TokenId> tokens);

void save_model(const NGramModel& model, const std::filesystem::path& path);
NGramModel load_model(const std::filesystem::path& path);

}  // namespace memprobe
