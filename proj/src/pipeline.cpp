#include "memprobe/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"
#include "memprobe/tokenizer.hpp"

namespace memprobe {

using nlohmann::json;
namespace fs = std::filesystem;

PipelinePaths pipeline_paths(const fs::path& out_dir) {
  PipelinePaths p;
  p.corpus_jsonl = out_dir / "corpus.jsonl";
  p.vocab = out_dir / "vocab.json";
  p.manifest = out_dir / "manifest.json";
  p.train_jsonl = out_dir / "corpus.train.jsonl";
  p.train_bin = out_dir / "corpus.train.bin";
  p.train_idx = out_dir / "corpus.train.idx.json";
  p.valid_jsonl = out_dir / "corpus.valid.jsonl";
  p.model = out_dir / "model.json";
  p.records = out_dir / "records.jsonl";
  p.traces = out_dir / "traces.jsonl";
  p.aggregate_csv = out_dir / "aggregate.csv";
  p.heatmap = out_dir / "heatmap.json";
  p.rampsat = out_dir / "rampsat.json";
  p.detfrac = out_dir / "detfrac.json";
  p.bleu_table = out_dir / "bleu_table.csv";
  p.context_buckets = out_dir / "context_buckets.json";
  return p;
}

Provenance make_provenance(const RunConfig& cfg) {
  Provenance prov;
  prov.schema_version = 1;
  prov.config_hash = config_hash_hex(cfg.canonical_string());
  prov.seed = cfg.seed;
  return prov;
}

namespace {

std::vector<Document> load_corpus_jsonl(const fs::path& path) {
  std::vector<Document> docs;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw RuntimeFailure("corpus: malformed JSONL line in " + path.string() + ": " + e.what());
    }
    Document d;
    try {
      d.id = j.at("id").get<std::string>();
      d.text = j.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw RuntimeFailure("corpus: line missing id/text in " + path.string() + ": " + e.what());
    }
    docs.push_back(std::move(d));
  }
  if (docs.empty()) throw MissingInputError("corpus: no documents in " + path.string());
  return docs;
}

std::vector<Document> load_corpus_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw MissingInputError("corpus: " + dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  docs.reserve(files.size());
  for (const fs::path& f : files) {
    Document d;
    d.id = f.filename().string();
    d.text = read_text_file(f);
    docs.push_back(std::move(d));
  }
  if (docs.empty()) throw MissingInputError("corpus: no files in " + dir.string());
  return docs;
}

void write_vocab(const fs::path& path, const Vocabulary& vocab) {
  json j;
  j["schema_version"] = 1;
  j["tokens"] = vocab.tokens();
  atomic_write_text(path, j.dump() + "\n");
}

Vocabulary read_vocab(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw RuntimeFailure("vocab: corrupt file " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("schema_version").get<std::int64_t>() != 1) {
      throw RuntimeFailure("vocab: unsupported schema_version in " + path.string());
    }
    return Vocabulary::from_token_list(j.at("tokens").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw RuntimeFailure("vocab: corrupt file " + path.string() + ": " + e.what());
  }
}

void append_le32(std::string& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

struct CopyView {
  const std::string* id;
  std::int32_t copy_index;
  const TokenSeq* tokens;
};

void write_materialized(const RunConfig& cfg, const PipelinePaths& paths, const std::vector<CopyView>& copies) {
  if (cfg.io.write_jsonl) {
    std::string body;
    for (const CopyView& c : copies) {
      json j;
      j["id"] = *c.id;
      j["copy_index"] = c.copy_index;
      j["tokens"] = *c.tokens;
      body += j.dump();
      body += "\n";
    }
    atomic_write_text(paths.train_jsonl, body);
  }
  if (cfg.io.write_binary) {
    std::string blob;
    json idx;
    idx["schema_version"] = 1;
    json entries = json::array();
    std::size_t offset = 0;
    for (const CopyView& c : copies) {
      for (TokenId t : *c.tokens) append_le32(blob, t);
      entries.push_back(json{{"id", *c.id},
                             {"copy_index", c.copy_index},
                             {"offset", offset},
                             {"length", c.tokens->size()}});
      offset += c.tokens->size();
    }
    idx["docs"] = std::move(entries);
    atomic_write_text(paths.train_bin, blob);
    atomic_write_text(paths.train_idx, idx.dump() + "\n");
  }
}

}  // namespace

std::vector<Document> load_base_corpus(const RunConfig& cfg) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  switch (cfg.corpus.source) {
    case CorpusSource::kSynthetic:
      if (!fs::exists(paths.corpus_jsonl)) {
        throw MissingInputError("corpus: " + paths.corpus_jsonl.string() + " not found (run gen-synthetic first)");
      }
      return load_corpus_jsonl(paths.corpus_jsonl);
    case CorpusSource::kJsonl:
      if (!fs::exists(cfg.corpus.path)) throw MissingInputError("corpus: " + cfg.corpus.path + " not found");
      return load_corpus_jsonl(cfg.corpus.path);
    case CorpusSource::kDir:
      return load_corpus_dir(cfg.corpus.path);
  }
  throw RuntimeFailure("corpus: unreachable source");
}

void tokenize_corpus(std::vector<Document>& docs, const Vocabulary& vocab) {
  for (Document& d : docs) {
    d.tokens = tokenize(d.text, vocab);
  }
}

void cmd_gen_synthetic(const RunConfig& cfg) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  const std::vector<Document> docs = generate_synthetic_corpus(cfg.corpus.synthetic);
  std::string body;
  for (const Document& d : docs) {
    json j;
    j["id"] = d.id;
    j["text"] = d.text;
    body += j.dump();
    body += "\n";
  }
  atomic_write_text(paths.corpus_jsonl, body);
}

void cmd_build(const RunConfig& cfg) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);

  std::vector<Document> docs = load_base_corpus(cfg);
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const Document& d : docs) texts.push_back(d.text);
  const Vocabulary vocab = build_vocab(texts);
  tokenize_corpus(docs, vocab);

  CorpusManifest manifest = plan_duplication(docs, cfg.plan);
  manifest.vocab_ref = paths.vocab.filename().string();
  manifest.materialized.train_jsonl = cfg.io.write_jsonl ? paths.train_jsonl.filename().string() : "";
  manifest.materialized.train_bin = cfg.io.write_binary ? paths.train_bin.filename().string() : "";
  manifest.materialized.train_index = cfg.io.write_binary ? paths.train_idx.filename().string() : "";
  manifest.materialized.validation_jsonl = paths.valid_jsonl.filename().string();

  const std::vector<CorpusCopy> train_copies = materialize(manifest, Split::kTrain);
  std::vector<CopyView> views;
  views.reserve(train_copies.size());
  for (const CorpusCopy& c : train_copies) {
    const ManifestEntry& e = manifest.entries[static_cast<std::size_t>(c.entry_index)];
    // entries and docs share the same order by construction
    const Document& d = docs[static_cast<std::size_t>(c.entry_index)];
    if (d.id != e.id) throw RuntimeFailure("build: entry/document order mismatch");
    views.push_back(CopyView{&d.id, c.copy_index, &d.tokens});
  }

  write_vocab(paths.vocab, vocab);
  write_materialized(cfg, paths, views);

  const std::vector<CorpusCopy> valid_copies = materialize(manifest, Split::kValidation);
  std::string valid_body;
  for (const CorpusCopy& c : valid_copies) {
    const Document& d = docs[static_cast<std::size_t>(c.entry_index)];
    json j;
    j["id"] = d.id;
    j["copy_index"] = c.copy_index;
    j["tokens"] = d.tokens;
    valid_body += j.dump();
    valid_body += "\n";
  }
  atomic_write_text(paths.valid_jsonl, valid_body);

  atomic_write_text(paths.manifest, manifest.to_json_string());
}

MaterializedStream read_train_stream(const PipelinePaths& paths) {
  MaterializedStream stream;
  if (fs::exists(paths.train_bin) && fs::exists(paths.train_idx)) {
    const std::string blob = read_text_file(paths.train_bin);
    if (blob.size() % 4 != 0) throw RuntimeFailure("corpus: " + paths.train_bin.string() + " is truncated");
    stream.tokens.reserve(blob.size() / 4);
    for (std::size_t i = 0; i < blob.size(); i += 4) {
      const std::uint32_t u = static_cast<std::uint8_t>(blob[i]) |
                              (static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[i + 1])) << 8) |
                              (static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[i + 2])) << 16) |
                              (static_cast<std::uint32_t>(static_cast<std::uint8_t>(blob[i + 3])) << 24);
      stream.tokens.push_back(static_cast<TokenId>(u));
    }
    json idx;
    try {
      idx = json::parse(read_text_file(paths.train_idx));
    } catch (const json::exception& e) {
      throw RuntimeFailure("corpus: corrupt index " + paths.train_idx.string() + ": " + e.what());
    }
    for (const json& d : idx.at("docs")) {
      MaterializedStream::Extent e;
      e.id = d.at("id").get<std::string>();
      e.copy_index = d.at("copy_index").get<std::int32_t>();
      e.offset = d.at("offset").get<std::size_t>();
      e.length = d.at("length").get<std::size_t>();
      if (e.offset + e.length > stream.tokens.size()) {
        throw RuntimeFailure("corpus: index extent out of range in " + paths.train_idx.string());
      }
      stream.extents.push_back(std::move(e));
    }
    return stream;
  }
  if (fs::exists(paths.train_jsonl)) {
    for (const std::string& line : read_lines(paths.train_jsonl)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw RuntimeFailure("corpus: malformed line in " + paths.train_jsonl.string() + ": " + e.what());
      }
      MaterializedStream::Extent e;
      e.id = j.at("id").get<std::string>();
      e.copy_index = j.at("copy_index").get<std::int32_t>();
      e.offset = stream.tokens.size();
      const TokenSeq tokens = j.at("tokens").get<TokenSeq>();
      e.length = tokens.size();
      stream.tokens.insert(stream.tokens.end(), tokens.begin(), tokens.end());
      stream.extents.push_back(std::move(e));
    }
    return stream;
  }
  throw MissingInputError("corpus: no materialized stream under " + paths.train_bin.parent_path().string() +
                          " (run build first)");
}

std::vector<std::span<const TokenId>> MaterializedStream::copy_spans() const {
  std::vector<std::span<const TokenId>> spans;
  spans.reserve(extents.size());
  for (const Extent& e : extents) {
    spans.emplace_back(tokens.data() + e.offset, e.length);
  }
  return spans;
}

void cmd_train(const RunConfig& cfg, int jobs) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  if (!fs::exists(paths.manifest)) {
    throw MissingInputError("train: " + paths.manifest.string() + " not found (run build first)");
  }
  const Vocabulary vocab = read_vocab(paths.vocab);
  const MaterializedStream stream = read_train_stream(paths);
  if (stream.tokens.empty()) throw RuntimeFailure("train: materialized stream is empty");
  const std::vector<std::span<const TokenId>> spans = stream.copy_spans();
  const NGramModel model = jobs == 1 ? train(spans, vocab, cfg.model) : train_parallel(spans, vocab, cfg.model, jobs);
  save_model(model, paths.model);
}

void cmd_sweep(const RunConfig& cfg, int jobs) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  if (!fs::exists(paths.model)) {
    throw MissingInputError("sweep: " + paths.model.string() + " not found (run train first)");
  }
  if (!fs::exists(paths.manifest)) {
    throw MissingInputError("sweep: " + paths.manifest.string() + " not found (run build first)");
  }
  const NGramModel model = load_model(paths.model);
  const CorpusManifest manifest = CorpusManifest::from_json_string(read_text_file(paths.manifest));
  std::vector<Document> docs = load_base_corpus(cfg);
  tokenize_corpus(docs, model.vocab());

  const ProbeSet probe_set = make_probes(manifest, docs, cfg.sweep);
  const std::vector<SweepRecord> records = run_sweep(model, probe_set.probes, cfg.sweep, jobs);

  const Provenance prov = make_provenance(cfg);
  write_records_jsonl(paths.records, records, prov);
  const HeatmapResult heatmap = aggregate_heatmap(records, cfg.sweep.duplicity_bin_width);
  write_aggregate_csv(paths.aggregate_csv, heatmap, prov);
  write_heatmap_json(paths.heatmap, heatmap, prov);
}

void cmd_probe(const RunConfig& cfg, const std::string& doc_id, const DecodeConfig& decode_config) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  if (!fs::exists(paths.model)) {
    throw MissingInputError("probe: " + paths.model.string() + " not found (run train first)");
  }
  const NGramModel model = load_model(paths.model);
  const CorpusManifest manifest = CorpusManifest::from_json_string(read_text_file(paths.manifest));
  std::vector<Document> docs = load_base_corpus(cfg);
  tokenize_corpus(docs, model.vocab());

  // A single-document probe set, bypassing the sweep's selection rules.
  const ManifestEntry* entry = nullptr;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.id == doc_id) {
      entry = &e;
      break;
    }
  }
  if (entry == nullptr) throw MissingInputError("probe: document " + doc_id + " not in manifest");
  const Document* doc = nullptr;
  for (const Document& d : docs) {
    if (d.id == doc_id) {
      doc = &d;
      break;
    }
  }
  if (doc == nullptr) throw MissingInputError("probe: document " + doc_id + " not in corpus");
  const std::int32_t plen = cfg.sweep.prefix_len;
  if (doc->content_length() < plen + 1) {
    throw ConfigError("probe: document " + doc_id + " is shorter than prefix_len+1 (" + std::to_string(plen + 1) +
                      ")");
  }

  MemorizationProbe probe;
  probe.doc_id = doc_id;
  probe.duplicity = entry->duplicity;
  probe.bucket = entry->bucket;
  probe.prefix.assign(doc->tokens.begin(), doc->tokens.begin() + plen);
  const auto target_len = std::min<std::size_t>(512, doc->tokens.size() - static_cast<std::size_t>(plen));
  probe.target.assign(doc->tokens.begin() + plen, doc->tokens.begin() + plen + static_cast<std::ptrdiff_t>(target_len));

  DecodeSetting setting{decode_config.strategy == Strategy::kGreedy, decode_config.top_p};
  const std::string stream_tag = probe.doc_id + "|" + setting.label();
  const DecodeTrace trace = generate(model, probe.prefix, decode_config, stream_tag);

  SweepRecord rec;
  rec.probe_id = probe.doc_id;
  rec.duplicity = probe.duplicity;
  rec.bucket = probe.bucket;
  rec.prefix_len = plen;
  rec.setting = setting;
  rec.seed = decode_config.seed;
  rec.verbatim = verbatim_memorized(trace.generated, probe.target);
  rec.bleu4 = soft_memorization_score(trace.generated, probe.target);
  rec.gen_len = static_cast<std::int32_t>(trace.generated.size());
  rec.stop_reason = trace.stop_reason;
  rec.gen_steps = static_cast<std::int32_t>(trace.steps.size());
  for (const StepRecord& s : trace.steps) {
    if (s.deterministic) ++rec.det_steps;
  }

  const Provenance prov = make_provenance(cfg);
  write_records_jsonl(paths.records, std::vector<SweepRecord>{rec}, prov);
  const std::vector<std::pair<std::string, DecodeTrace>> traces{{probe.doc_id, trace}};
  write_traces_jsonl(paths.traces, traces, decode_config, prov);
}

void cmd_analyze(const RunConfig& cfg) {
  const PipelinePaths paths = pipeline_paths(cfg.io.out_dir);
  if (!fs::exists(paths.records)) {
    throw MissingInputError("analyze: " + paths.records.string() + " not found (run sweep first)");
  }
  const std::vector<SweepRecord> records = read_records_jsonl(paths.records);
  if (records.empty()) throw RuntimeFailure("analyze: no records in " + paths.records.string());
  const Provenance prov = make_provenance(cfg);

  std::vector<RampSatEntry> rampsat;
  std::set<std::pair<int, double>> setting_keys;
  for (const SweepRecord& r : records) {
    setting_keys.emplace(r.setting.greedy ? 0 : 1, r.setting.greedy ? 0.0 : r.setting.top_p);
  }
  for (const auto& [kind, p] : setting_keys) {
    const DecodeSetting setting = kind == 0 ? DecodeSetting{true, 1.0} : DecodeSetting{false, p};
    RampSatEntry entry;
    entry.setting = setting.label();
    entry.series = duplicity_series(records, setting);
    entry.ramp_up = detect_rampup(entry.series, cfg.sweep.detectors.tau_r, cfg.sweep.detectors.growth_factor);
    entry.saturation = detect_saturation(entry.series, cfg.sweep.detectors.tau_s, cfg.sweep.detectors.epsilon);
    rampsat.push_back(std::move(entry));
  }
  write_rampsat_json(paths.rampsat, rampsat, cfg.sweep.detectors, prov);

  const std::vector<DetFracCell> detfrac = deterministic_fraction_by_duplicity(records);
  write_detfrac_json(paths.detfrac, detfrac, prov);

  const std::vector<BleuCell> bleu = bleu_by_bin(records, cfg.sweep.duplicity_bin_width);
  write_bleu_table_csv(paths.bleu_table, bleu, prov);

  const std::vector<ContextBucketCell> buckets = aggregate_context_buckets(records);
  write_context_buckets_json(paths.context_buckets, buckets, prefix_mode_label(cfg.sweep.prefix_mode), prov);
}

}  // namespace memprobe
