#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "memprobe/corpus.hpp"
#include "memprobe/decode.hpp"
#include "memprobe/vocab.hpp"

namespace memprobe {

/// A (prefix, target continuation) pair drawn from a training document.
struct MemorizationProbe {
  std::string doc_id;
  std::int32_t duplicity = 1;
  LengthBucket bucket = LengthBucket::kUpTo200;
  TokenSeq prefix;
  TokenSeq target;  // capped at 512 tokens; includes the final <eos> when reached

  std::int32_t target_len() const { return static_cast<std::int32_t>(target.size()); }
};

struct MemorizationRecord {
  std::string probe_id;
  DecodeConfig config;
  bool verbatim = false;
  double bleu4 = 0.0;
  TokenSeq generated;
  StopReason stop_reason = StopReason::kCap;
};

/// Exact reproduction of target. When target ends with <eos> the generation
/// must stop there too (equal sequences); when target was cap-truncated only
/// the first target-length tokens are compared and extras are ignored.
bool verbatim_memorized(std::span<const TokenId> generated, std::span<const TokenId> target);

/// Sentence BLEU with modified (clipped) n-gram precisions for n = 1..4,
/// uniform weights, geometric mean, and brevity penalty exp(1 - r/c) for
/// c < r. Unsmoothed: any zero precision zeroes the score. Orders beyond the
/// candidate length (no candidate n-grams at all) are left out of the mean,
/// which keeps bleu4(x, x) == 1 for short sequences.
double bleu4(std::span<const TokenId> candidate, std::span<const TokenId> reference);

/// BLEU-4 of the generated continuation against the target continuation.
/// Both sides exclude the prompt by construction, so the score is invariant
/// to the prefix.
double soft_memorization_score(std::span<const TokenId> generated, std::span<const TokenId> target);

}  // namespace memprobe
