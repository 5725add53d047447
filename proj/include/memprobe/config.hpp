#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/ngram.hpp"
#include "memprobe/sweep.hpp"

namespace memprobe {

enum class CorpusSource : std::uint8_t { kSynthetic = 0, kDir = 1, kJsonl = 2 };

struct CorpusSection {
  CorpusSource source = CorpusSource::kSynthetic;
  std::string path;  // dir/jsonl sources
  SyntheticSpec synthetic;
};

struct IoSection {
  std::string out_dir = "out";
  bool write_jsonl = true;
  bool write_binary = true;
};

/// Whole-pipeline configuration. A single top-level seed derives every
/// module stream via mix_seed(seed, tag); the sweep's decode seeds default
/// to mix_seed(seed, "sweep-seed:<i>") for i in 0..num_seeds.
struct RunConfig {
  std::uint64_t seed = 1;
  std::int32_t num_seeds = 5;
  CorpusSection corpus;
  DuplicationPlan plan;
  NGramParams model;
  SweepConfig sweep;
  IoSection io;

  /// Fills derived seeds (plan/synthetic/sweep) from the top-level seed.
  void derive_seeds();

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // strict: unknown keys rejected

  /// Canonical serialized form (used for the config hash embedded in
  /// reports).
  std::string canonical_string() const;
};

/// Reads, validates, and fully defaults a config file. Unknown keys and
/// out-of-range values raise ConfigError naming the exact field path.
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace memprobe
