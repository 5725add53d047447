// Compares the serial reference paths against the OpenMP kernels (n-gram
// counting and the probe sweep) on a synthetic fixture, and checks that the
// outputs are identical before reporting timings.
//
//   bench_threads [--docs N] [--vocab V] [--threads T]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "memprobe/corpus.hpp"
#include "memprobe/ngram.hpp"
#include "memprobe/pipeline.hpp"
#include "memprobe/reports.hpp"
#include "memprobe/sweep.hpp"
#include "memprobe/tokenizer.hpp"

using namespace memprobe;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  std::int32_t num_docs = 800;
  std::int32_t vocab_size = 300;
  int threads = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--docs") == 0 && i + 1 < argc) num_docs = std::atoi(argv[++i]);
    else if (std::strcmp(argv[i], "--vocab") == 0 && i + 1 < argc) vocab_size = std::atoi(argv[++i]);
    else if (std::strcmp(argv[i], "--threads") == 0 && i + 1 < argc) threads = std::atoi(argv[++i]);
    else {
      std::fprintf(stderr, "usage: %s [--docs N] [--vocab V] [--threads T]\n", argv[0]);
      return 2;
    }
  }
#ifdef _OPENMP
  if (threads <= 0) threads = omp_get_max_threads();
#else
  threads = 1;
#endif

  SyntheticSpec spec;
  spec.num_docs = num_docs;
  spec.vocab_size = vocab_size;
  spec.seed = 11;
  std::vector<Document> docs = generate_synthetic_corpus(spec);

  std::vector<std::string> texts;
  for (const Document& d : docs) texts.push_back(d.text);
  const Vocabulary vocab = build_vocab(texts);
  tokenize_corpus(docs, vocab);

  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = 2;
  plan.level_max = 20;
  plan.validation_fraction = 0.0;
  plan.seed = 11;
  const CorpusManifest manifest = plan_duplication(docs, plan);
  const std::vector<CorpusCopy> copies = materialize(manifest, Split::kTrain);

  std::vector<std::span<const TokenId>> spans;
  spans.reserve(copies.size());
  std::size_t total_tokens = 0;
  for (const CorpusCopy& c : copies) {
    const Document& d = docs[static_cast<std::size_t>(c.entry_index)];
    spans.emplace_back(d.tokens.data(), d.tokens.size());
    total_tokens += d.tokens.size();
  }

  NGramParams params;
  std::printf("fixture: %d docs, %zu copies, %zu tokens, vocab %d, threads %d\n", num_docs, copies.size(),
              total_tokens, vocab.size(), threads);

  auto t0 = std::chrono::steady_clock::now();
  const NGramModel serial_model = train(spans, vocab, params);
  const double train_serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const NGramModel parallel_model = train_parallel(spans, vocab, params, threads);
  const double train_parallel_s = seconds_since(t0);

  if (!serial_model.counts_equal(parallel_model)) {
    std::printf("FAIL: parallel training counts differ from serial reference\n");
    return 1;
  }

  SweepConfig sweep_cfg;
  sweep_cfg.prefix_len = 16;
  sweep_cfg.max_new_tokens = 128;
  sweep_cfg.seeds = {1, 2};
  sweep_cfg.include_singletons = false;
  const ProbeSet probes = make_probes(manifest, docs, sweep_cfg);

  t0 = std::chrono::steady_clock::now();
  const std::vector<SweepRecord> serial_records = run_sweep(serial_model, probes.probes, sweep_cfg, 1);
  const double sweep_serial = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  const std::vector<SweepRecord> parallel_records = run_sweep(serial_model, probes.probes, sweep_cfg, threads);
  const double sweep_parallel = seconds_since(t0);

  bool same = serial_records.size() == parallel_records.size();
  for (std::size_t i = 0; same && i < serial_records.size(); ++i) {
    same = record_to_json_line(serial_records[i]) == record_to_json_line(parallel_records[i]);
  }
  if (!same) {
    std::printf("FAIL: parallel sweep records differ from serial reference\n");
    return 1;
  }

  std::printf("%-22s %10s %10s %8s\n", "kernel", "serial_s", "omp_s", "speedup");
  std::printf("%-22s %10.3f %10.3f %7.2fx\n", "ngram_count", train_serial, train_parallel_s,
              train_parallel_s > 0 ? train_serial / train_parallel_s : 0.0);
  std::printf("%-22s %10.3f %10.3f %7.2fx\n", "probe_sweep", sweep_serial, sweep_parallel,
              sweep_parallel > 0 ? sweep_serial / sweep_parallel : 0.0);
  std::printf("outputs identical across thread counts: yes\n");
  return 0;
}
