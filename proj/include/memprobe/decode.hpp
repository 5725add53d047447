#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memprobe/ngram.hpp"
#include "memprobe/rng.hpp"
#include "memprobe/vocab.hpp"

namespace memprobe {

enum class Strategy : std::uint8_t { kGreedy = 0, kNucleus = 1 };

std::string_view strategy_label(Strategy s);

struct DecodeConfig {
  Strategy strategy = Strategy::kGreedy;
  double top_p = 1.0;  // nucleus only, in (0, 1]
  double temperature = 1.0;
  std::int32_t max_new_tokens = 512;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct StepRecord {
  std::int32_t step_index = 0;
  TokenId chosen_token = 0;
  double chosen_prob = 0.0;    // post-truncation, renormalized
  double raw_max_prob = 0.0;   // pre-truncation max
  std::int32_t nucleus_size = 1;
  bool deterministic = true;   // nucleus_size == 1
  double cumulative_mass = 0.0;  // pre-truncation mass inside the nucleus
};

enum class StopReason : std::uint8_t { kEos = 0, kCap = 1 };

std::string_view stop_reason_label(StopReason r);

struct DecodeTrace {
  std::vector<double> prefix_probs;  // teacher-forced probability of each actual prefix token
  std::vector<StepRecord> steps;
  TokenSeq generated;
  StopReason stop_reason = StopReason::kCap;
};

/// argmax with ties broken by lowest token id.
TokenId greedy_pick(std::span<const double> dist);

/// Nucleus in (probability desc, token id asc) order with renormalized
/// probabilities; the minimal prefix whose pre-truncation mass reaches top_p.
struct Nucleus {
  std::vector<TokenId> tokens;
  std::vector<double> probs;     // renormalized, sums to 1
  double cumulative_mass = 0.0;  // pre-truncation mass of the nucleus
  double raw_max_prob = 0.0;
};

Nucleus nucleus_truncate(std::span<const double> dist, double top_p);

/// Inverse-CDF draw over the nucleus in its stored order; consumes exactly
/// one uniform from the rng.
TokenId sample_token(const Nucleus& nucleus, SplitMix64& rng);

/// The draw itself, for a given uniform u in [0, 1).
TokenId sample_token(const Nucleus& nucleus, double u);

/// p_i' proportional to p_i^(1/T). T=1 leaves the distribution untouched.
void apply_temperature(std::vector<double>& dist, double temperature);

/// Decodes until <eos> or max_new_tokens, recording one StepRecord per step
/// plus teacher-forced prefix probabilities. The rng stream is
/// mix(config.seed, fnv1a64(stream_tag)), so results do not depend on
/// scheduling.
DecodeTrace generate(const LanguageModel& model, std::span<const TokenId> prefix, const DecodeConfig& config,
                     std::string_view stream_tag);

/// For each position i >= 1: P(tokens[i] | tokens[0..i)). Length of the
/// result is tokens.size() - 1.
std::vector<double> trace_prefix(const LanguageModel& model, std::span<const TokenId> tokens);

}  // namespace memprobe
