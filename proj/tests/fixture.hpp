#pragma once

// Shared small trained fixture for the sweep/parallel suites.

#include <span>
#include <string>
#include <vector>

#include "memprobe/corpus.hpp"
#include "memprobe/ngram.hpp"
#include "memprobe/tokenizer.hpp"

namespace memprobe::testing {

struct TrainedFixture {
  std::vector<Document> docs;
  Vocabulary vocab;
  CorpusManifest manifest;
  TokenSeq stream;  // flattened copies
  std::vector<std::pair<std::size_t, std::size_t>> extents;
  NGramModel model{Vocabulary{}, NGramParams{}};

  std::vector<std::span<const TokenId>> spans() const {
    std::vector<std::span<const TokenId>> out;
    out.reserve(extents.size());
    for (const auto& [offset, length] : extents) {
      out.emplace_back(stream.data() + offset, length);
    }
    return out;
  }
};

inline TrainedFixture make_trained_fixture(std::uint64_t seed, std::int32_t num_docs = 160,
                                           std::int32_t vocab_size = 100, std::int32_t level_min = 2,
                                           std::int32_t level_max = 4, NGramParams params = {}) {
  TrainedFixture fx;
  SyntheticSpec spec;
  spec.num_docs = num_docs;
  spec.vocab_size = vocab_size;
  spec.seed = seed;
  fx.docs = generate_synthetic_corpus(spec);

  std::vector<std::string> texts;
  for (const Document& d : fx.docs) texts.push_back(d.text);
  fx.vocab = build_vocab(texts);
  for (Document& d : fx.docs) d.tokens = tokenize(d.text, fx.vocab);

  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = level_min;
  plan.level_max = level_max;
  plan.validation_fraction = 0.0;
  plan.seed = seed;
  fx.manifest = plan_duplication(fx.docs, plan);

  for (const CorpusCopy& c : materialize(fx.manifest, Split::kTrain)) {
    const TokenSeq& t = fx.docs[static_cast<std::size_t>(c.entry_index)].tokens;
    fx.extents.emplace_back(fx.stream.size(), t.size());
    fx.stream.insert(fx.stream.end(), t.begin(), t.end());
  }
  fx.model = train(fx.spans(), fx.vocab, params);
  return fx;
}

}  // namespace memprobe::testing
