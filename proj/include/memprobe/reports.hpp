#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "memprobe/decode.hpp"
#include "memprobe/sweep.hpp"

namespace memprobe {

/// Stamped into every report: {schema_version, config hash, seed}.
struct Provenance {
  std::uint32_t schema_version = 1;
  std::string config_hash;
  std::uint64_t seed = 0;
};

std::string config_hash_hex(const std::string& canonical_config_json);

// records.jsonl: one record per line; provenance goes to the .meta.json
// sidecar so the stream stays pure.
void write_records_jsonl(const std::filesystem::path& path, std::span<const SweepRecord> records,
                         const Provenance& prov);
std::vector<SweepRecord> read_records_jsonl(const std::filesystem::path& path);

std::string record_to_json_line(const SweepRecord& record);
SweepRecord record_from_json_line(const std::string& line);

/// traces.jsonl: {probe_id, config, stop_reason, generated, prefix_probs,
/// steps:[{i, tok, p, pmax, nsz, det, mass}]}.
void write_traces_jsonl(const std::filesystem::path& path,
                        std::span<const std::pair<std::string, DecodeTrace>> traces, const DecodeConfig& config,
                        const Provenance& prov);

/// aggregate.csv: rows = duplicity bin, one fraction/_n/_std column triple
/// per decode setting; provenance in a leading '#' comment.
void write_aggregate_csv(const std::filesystem::path& path, const HeatmapResult& heatmap, const Provenance& prov);

void write_heatmap_json(const std::filesystem::path& path, const HeatmapResult& heatmap, const Provenance& prov);

struct RampSatEntry {
  std::string setting;
  std::optional<std::int32_t> ramp_up;
  std::optional<std::int32_t> saturation;
  std::vector<std::pair<std::int32_t, double>> series;
};

void write_rampsat_json(const std::filesystem::path& path, std::span<const RampSatEntry> entries,
                        const DetectorThresholds& thresholds, const Provenance& prov);

void write_detfrac_json(const std::filesystem::path& path, std::span<const DetFracCell> cells,
                        const Provenance& prov);

/// BLEU-by-bin table, settings as rows like the source table it mirrors.
void write_bleu_table_csv(const std::filesystem::path& path, std::span<const BleuCell> cells, const Provenance& prov);

void write_context_buckets_json(const std::filesystem::path& path, std::span<const ContextBucketCell> cells,
                                std::string_view prefix_mode, const Provenance& prov);

}  // namespace memprobe
