#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memprobe/config.hpp"
#include "memprobe/corpus.hpp"
#include "memprobe/decode.hpp"
#include "memprobe/ngram.hpp"
#include "memprobe/reports.hpp"

namespace memprobe {

/// Canonical file locations under io.out_dir.
struct PipelinePaths {
  std::filesystem::path corpus_jsonl;
  std::filesystem::path vocab;
  std::filesystem::path manifest;
  std::filesystem::path train_jsonl;
  std::filesystem::path train_bin;
  std::filesystem::path train_idx;
  std::filesystem::path valid_jsonl;
  std::filesystem::path model;
  std::filesystem::path records;
  std::filesystem::path traces;
  std::filesystem::path aggregate_csv;
  std::filesystem::path heatmap;
  std::filesystem::path rampsat;
  std::filesystem::path detfrac;
  std::filesystem::path bleu_table;
  std::filesystem::path context_buckets;
};

PipelinePaths pipeline_paths(const std::filesystem::path& out_dir);

/// Base corpus (text only, untokenized): synthetic -> out_dir/corpus.jsonl,
/// dir -> one document per file sorted by name, jsonl -> {"id","text"} lines.
std::vector<Document> load_base_corpus(const RunConfig& cfg);

void tokenize_corpus(std::vector<Document>& docs, const Vocabulary& vocab);

/// Flat materialized stream plus per-copy extents, as read back from the
/// binary or JSONL form.
struct MaterializedStream {
  TokenSeq tokens;
  struct Extent {
    std::string id;
    std::int32_t copy_index;
    std::size_t offset;
    std::size_t length;
  };
  std::vector<Extent> extents;

  std::vector<std::span<const TokenId>> copy_spans() const;
};

Provenance make_provenance(const RunConfig& cfg);

// Subcommand bodies (shared by the CLI and the test suites).
void cmd_gen_synthetic(const RunConfig& cfg);
void cmd_build(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg, int jobs);
void cmd_sweep(const RunConfig& cfg, int jobs);
void cmd_probe(const RunConfig& cfg, const std::string& doc_id, const DecodeConfig& decode_config);
void cmd_analyze(const RunConfig& cfg);

MaterializedStream read_train_stream(const PipelinePaths& paths);

}  // namespace memprobe
