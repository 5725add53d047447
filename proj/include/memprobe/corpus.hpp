#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memprobe/vocab.hpp"

namespace memprobe {

struct Document {
  std::string id;
  std::string text;
  TokenSeq tokens;  // ends with exactly one <eos>

  /// Token count including the trailing <eos>.
  std::int32_t token_count() const { return static_cast<std::int32_t>(tokens.size()); }

  /// Token count excluding <eos>; this is what length bucketing uses.
  std::int32_t content_length() const { return token_count() - 1; }
};

/// Four length ranges over content token count: (0,200], (200,300],
/// (300,400], (400,inf). 200 lands in the first bucket.
enum class LengthBucket : std::uint8_t { kUpTo200 = 0, k200To300 = 1, k300To400 = 2, kOver400 = 3 };

inline constexpr int kNumBuckets = 4;

LengthBucket bucket_for(std::int32_t content_length);
std::string_view bucket_label(LengthBucket b);
std::optional<LengthBucket> bucket_from_label(std::string_view label);

/// Map doc_id -> bucket for tokenized documents.
std::vector<std::pair<std::string, LengthBucket>> assign_buckets(const std::vector<Document>& docs);

/// Content-length range (inclusive on both ends) and sampling weight for one
/// bucket of the synthetic generator.
struct BucketLengthRange {
  std::int32_t lo = 1;
  std::int32_t hi = 1;
  double weight = 1.0;
};

struct SyntheticSpec {
  std::int32_t num_docs = 12000;
  std::int32_t vocab_size = 500;
  /// Zipf exponent of the token draw. The skew is what makes short contexts
  /// recur across documents, so a duplicated continuation has distractors to
  /// beat; 0.6 spreads the memorization ramp across copy counts 2..30 at
  /// this corpus scale.
  double zipf_s = 0.6;
  std::array<BucketLengthRange, kNumBuckets> buckets = {{
      {1, 200, 1.0},
      {201, 300, 1.0},
      {301, 400, 1.0},
      {401, 512, 1.0},
  }};
  std::uint64_t seed = 0;
};

/// Seeded corpus of pairwise-distinct documents whose lengths cover the four
/// buckets in proportion to the spec weights (equal weights: num_docs/4 +-1
/// per bucket). Documents carry text only; tokenization happens at build time.
std::vector<Document> generate_synthetic_corpus(const SyntheticSpec& spec);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1 };

std::string_view split_label(Split s);

struct DuplicationPlan {
  std::int32_t docs_per_level = 280;
  std::int32_t level_min = 2;
  std::int32_t level_max = 30;
  std::int32_t docs_per_bucket_per_level = 70;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;

  std::int32_t num_levels() const { return level_max - level_min + 1; }
  void validate() const;  // throws ConfigError
};

struct ManifestEntry {
  std::string id;
  std::int32_t duplicity = 1;  // total copy count
  LengthBucket bucket = LengthBucket::kUpTo200;
  Split split = Split::kTrain;
};

/// Names of the materialized corpus artifacts, recorded so downstream
/// commands can locate them from the manifest alone.
struct MaterializedFiles {
  std::string train_jsonl;
  std::string train_bin;
  std::string train_index;
  std::string validation_jsonl;
};

struct CorpusManifest {
  std::uint32_t schema_version = 1;
  std::uint64_t seed = 0;
  DuplicationPlan plan;
  std::string vocab_ref;
  std::vector<ManifestEntry> entries;
  MaterializedFiles materialized;

  std::uint64_t total_copies(Split split) const;
  std::string to_json_string() const;
  static CorpusManifest from_json_string(const std::string& text);
};

/// Selects the validation split, then for each level n in [level_min,
/// level_max] samples docs_per_bucket_per_level fresh documents per bucket
/// and assigns them duplicity n. Every unselected document keeps duplicity 1.
/// Throws PlanningError naming the bucket and shortfall when a bucket runs
/// dry. Entries come out in the input document order.
CorpusManifest plan_duplication(const std::vector<Document>& docs, const DuplicationPlan& plan);

/// One document copy in the materialized stream.
struct CorpusCopy {
  std::int32_t entry_index = 0;  // into manifest.entries
  std::int32_t copy_index = 0;   // 0..duplicity-1
};

/// Every entry of the split repeated duplicity times, in a seeded uniform
/// shuffle. The shuffle seed derives from manifest.seed, so the stream is a
/// pure function of the manifest.
std::vector<CorpusCopy> materialize(const CorpusManifest& manifest, Split split);

}  // namespace memprobe
