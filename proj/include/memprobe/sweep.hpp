#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memprobe/corpus.hpp"
#include "memprobe/decode.hpp"
#include "memprobe/memometrics.hpp"
#include "memprobe/ngram.hpp"

namespace memprobe {

/// One column of the experiment grid: the greedy baseline or a nucleus
/// threshold.
struct DecodeSetting {
  bool greedy = true;
  double top_p = 1.0;

  std::string label() const;  // "greedy" or "p=<top_p>"
  bool operator==(const DecodeSetting&) const = default;
};

enum class PrefixMode : std::uint8_t {
  kFixed = 0,   // prefix_len tokens for every probe
  kBleu = 1,    // min(bleu_prefix_len, content/2) per document
  kBuckets = 2  // per-bucket prefix lengths (context-length experiment)
};

std::string_view prefix_mode_label(PrefixMode m);

struct DetectorThresholds {
  double tau_r = 0.10;        // ramp-up fraction floor
  double growth_factor = 2.0; // ramp-up step-over-step factor
  double tau_s = 0.90;        // saturation fraction
  double epsilon = 0.02;      // residual headroom for saturation
};

struct SweepConfig {
  std::vector<double> top_p_values{0.2, 0.4, 0.6, 0.8};
  bool include_greedy_baseline = true;
  std::int32_t prefix_len = 150;
  std::int32_t bleu_prefix_len = 250;
  std::int32_t duplicity_bin_width = 5;
  std::vector<std::uint64_t> seeds;
  bool include_singletons = false;
  /// Seeded sample size for duplicity-1 probes; 0 means plan.docs_per_level,
  /// negative means all of them.
  std::int32_t singleton_sample = 0;
  std::int32_t max_new_tokens = 512;
  double temperature = 1.0;
  PrefixMode prefix_mode = PrefixMode::kFixed;
  std::array<std::int32_t, kNumBuckets> bucket_prefix_lens{100, 200, 300, 400};
  DetectorThresholds detectors;

  std::vector<DecodeSetting> settings() const;
  void validate() const;  // throws ConfigError
};

struct ProbeSet {
  std::vector<MemorizationProbe> probes;
  std::int32_t skipped_short = 0;  // documents too short for their prefix length
};

/// One probe per distinct duplicated train document (plus a seeded singleton
/// sample when configured); the prefix length follows config.prefix_mode.
ProbeSet make_probes(const CorpusManifest& manifest, const std::vector<Document>& docs, const SweepConfig& config);

/// One scored generation; everything analyze needs without retaining traces.
struct SweepRecord {
  std::string probe_id;
  std::int32_t duplicity = 1;
  LengthBucket bucket = LengthBucket::kUpTo200;
  std::int32_t prefix_len = 0;
  DecodeSetting setting;
  std::uint64_t seed = 0;
  bool verbatim = false;
  double bleu4 = 0.0;
  std::int32_t gen_len = 0;
  StopReason stop_reason = StopReason::kCap;
  std::int32_t det_steps = 0;  // deterministic (singleton-nucleus) generation steps
  std::int32_t gen_steps = 0;
};

/// Runs |probes| x |settings| x |seeds| generations and scores each one.
/// jobs == 1 is the serial reference loop; any other value runs the OpenMP
/// kernel (jobs <= 0: all threads). Output is identical for every jobs
/// value: records are indexed by task, never by completion order.
std::vector<SweepRecord> run_sweep(const LanguageModel& model, std::span<const MemorizationProbe> probes,
                                   const SweepConfig& config, int jobs = 0);

struct HeatmapResult {
  std::vector<std::string> row_labels;  // duplicity bins, ascending
  std::vector<std::string> col_labels;  // greedy first, then top_p ascending
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> mean;       // rows x cols, mean over seeds
  std::vector<std::vector<double>> stddev;     // population std over seeds
  std::vector<std::vector<std::int64_t>> n;    // probes per cell per seed
  std::vector<std::vector<std::vector<double>>> per_seed;  // seed -> rows x cols
};

/// Verbatim-memorized fraction per duplicity bin x decode setting.
/// Duplicity 1 is always its own bin; levels >= 2 are binned as
/// (k*w, (k+1)*w]. Records are deduplicated by (probe, setting, seed).
HeatmapResult aggregate_heatmap(std::span<const SweepRecord> records, std::int32_t bin_width);

struct ContextBucketCell {
  std::string setting;
  LengthBucket bucket = LengthBucket::kUpTo200;
  double fraction = 0.0;
  std::int64_t n = 0;
};

/// Memorized fraction per document-length bucket and setting; buckets with
/// no records are absent.
std::vector<ContextBucketCell> aggregate_context_buckets(std::span<const SweepRecord> records);

/// Fraction-vs-duplicity series (bin width 1) for one setting, mean over
/// seeds, sorted by duplicity level.
std::vector<std::pair<std::int32_t, double>> duplicity_series(std::span<const SweepRecord> records,
                                                              const DecodeSetting& setting);

/// Smallest duplicity whose fraction reaches tau_r and grew by at least
/// growth_factor over the previous level.
std::optional<std::int32_t> detect_rampup(std::span<const std::pair<std::int32_t, double>> series, double tau_r,
                                          double growth_factor);

/// Smallest duplicity whose fraction reaches tau_s, or (looking only at
/// non-final levels) whose remaining headroom to any later level is below
/// epsilon.
std::optional<std::int32_t> detect_saturation(std::span<const std::pair<std::int32_t, double>> series, double tau_s,
                                              double epsilon);

/// Pooled fraction of deterministic generation steps per group key.
std::map<std::string, double> deterministic_fraction(std::span<const DecodeTrace> traces,
                                                     std::span<const std::string> group_keys);

/// Same quantity computed from sweep records (det_steps / gen_steps pooled),
/// grouped by (duplicity level, setting); greedy records are skipped.
struct DetFracCell {
  std::string setting;
  std::int32_t duplicity = 1;
  double fraction = 0.0;
  std::int64_t steps = 0;
};

std::vector<DetFracCell> deterministic_fraction_by_duplicity(std::span<const SweepRecord> records);

/// Mean BLEU-4 per duplicity bin x setting, with the verbatim records either
/// excluded (the headline "soft memorization" number) or included.
struct BleuCell {
  std::string setting;
  std::string bin;
  double mean_excl_verbatim = 0.0;
  std::int64_t n_excl_verbatim = 0;
  double mean_all = 0.0;
  std::int64_t n_all = 0;
};

std::vector<BleuCell> bleu_by_bin(std::span<const SweepRecord> records, std::int32_t bin_width);

/// Bin label shared by the aggregations above.
std::string duplicity_bin_label(std::int32_t duplicity, std::int32_t bin_width);

}  // namespace memprobe
