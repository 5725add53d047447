#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"
#include "memprobe/ngram.hpp"
#include "memprobe/rng.hpp"
#include "memprobe/tokenizer.hpp"

using namespace memprobe;

namespace {

// vocab {<unk>, <eos>, a, b}; doc [a b a b <eos>]
struct AbFixture {
  Vocabulary vocab;
  TokenId a, b;
  TokenSeq doc;

  AbFixture() {
    a = vocab.add_token("a");
    b = vocab.add_token("b");
    doc = {a, b, a, b, kEosId};
  }

  NGramModel train_copies(int copies, NGramParams params) const {
    std::vector<std::span<const TokenId>> spans(static_cast<std::size_t>(copies),
                                                std::span<const TokenId>(doc.data(), doc.size()));
    return train(spans, vocab, params);
  }
};

std::uint64_t count_of(const NGramModel& m, std::size_t level, TokenSeq ctx, TokenId successor) {
  const auto it = m.levels()[level].find(ctx);
  if (it == m.levels()[level].end()) return 0;
  return it->second.count_of(successor);
}

NGramModel train_synthetic(std::uint64_t seed, const DuplicationPlan& plan, std::vector<Document>& docs_out,
                           CorpusManifest& manifest_out, NGramParams params = {}) {
  SyntheticSpec spec;
  spec.num_docs = 160;
  spec.vocab_size = 100;
  spec.seed = seed;
  docs_out = generate_synthetic_corpus(spec);
  std::vector<std::string> texts;
  for (const Document& d : docs_out) texts.push_back(d.text);
  const Vocabulary vocab = build_vocab(texts);
  for (Document& d : docs_out) d.tokens = tokenize(d.text, vocab);
  manifest_out = plan_duplication(docs_out, plan);
  const auto copies = materialize(manifest_out, Split::kTrain);
  std::vector<std::span<const TokenId>> spans;
  for (const CorpusCopy& c : copies) {
    const TokenSeq& t = docs_out[static_cast<std::size_t>(c.entry_index)].tokens;
    spans.emplace_back(t.data(), t.size());
  }
  return train(spans, vocab, params);
}

}  // namespace

TEST_CASE("training counts match hand counting") {
  AbFixture fx;
  NGramParams params;
  params.order = 2;
  const NGramModel m = fx.train_copies(1, params);

  CHECK(count_of(m, 1, {fx.a}, fx.b) == 2);
  CHECK(count_of(m, 1, {fx.b}, fx.a) == 1);
  CHECK(count_of(m, 1, {fx.b}, kEosId) == 1);
  CHECK(count_of(m, 0, {}, fx.a) == 2);
  CHECK(count_of(m, 0, {}, fx.b) == 2);
  CHECK(count_of(m, 0, {}, kEosId) == 1);
}

TEST_CASE("counting is linear in duplicity") {
  AbFixture fx;
  NGramParams params;
  params.order = 2;
  const NGramModel one = fx.train_copies(1, params);
  const NGramModel three = fx.train_copies(3, params);
  for (std::size_t level = 0; level < 2; ++level) {
    for (const auto& [ctx, cc] : one.levels()[level]) {
      const auto it = three.levels()[level].find(ctx);
      REQUIRE(it != three.levels()[level].end());
      CHECK(it->second.total == 3 * cc.total);
      for (const auto& [tok, cnt] : cc.successors) {
        CHECK(it->second.count_of(tok) == 3 * cnt);
      }
    }
  }
}

TEST_CASE("an empty-text document contributes only the begin-context <eos> count") {
  Vocabulary vocab;
  const TokenSeq doc{kEosId};
  const std::vector<std::span<const TokenId>> spans{std::span<const TokenId>(doc.data(), doc.size())};
  NGramParams params;
  params.order = 3;
  const NGramModel m = train(spans, vocab, params);
  CHECK(count_of(m, 0, {}, kEosId) == 1);
  CHECK(m.levels()[1].empty());
  CHECK(m.levels()[2].empty());
}

TEST_CASE("next_distribution matches the interpolation formula by hand") {
  AbFixture fx;
  NGramParams params;
  params.order = 2;
  params.alpha = 0.1;
  params.lambda = 0.1;
  const NGramModel m = fx.train_copies(1, params);

  // P_0(b) = (2 + 0.1
  // ) / (5 + 0.1*4); ML(b|a) = 2/2; P(b|a) = 0.9*1 + 0.1*P_0(b)
  const double p0_b = (2.0 + 0.1) / (5.0 + 0.1 * 4.0);
  const TokenSeq ctx{fx.a};
  const std::vector<double> dist = m.next_distribution(ctx);
  CHECK(dist[static_cast<std::size_t>(fx.b)] == doctest::Approx(0.9 * 1.0 + 0.1 * p0_b).epsilon(1e-12));

  // unseen context at every order falls back to the smoothed unigram
  const TokenSeq unseen{kUnkId};
  const std::vector<double> fallback = m.next_distribution(unseen);
  const std::vector<double> base = m.next_distribution(TokenSeq{});
  for (std::size_t w = 0; w < fallback.size(); ++w) {
    CHECK(fallback[w] == doctest::Approx(base[w]).epsilon(1e-12));
  }
  CHECK(base[static_cast<std::size_t>(fx.b)] == doctest::Approx(p0_b).epsilon(1e-12));
}

TEST_CASE("distributions are normalized with full support") {
  std::vector<Document> docs;
  CorpusManifest manifest;
  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = 2;
  plan.level_max = 4;
  plan.validation_fraction = 0.0;
  plan.seed = 21;
  const NGramModel m = train_synthetic(21, plan, docs, manifest);

  SplitMix64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = rng.next_below(6);
    TokenSeq ctx;
    for (std::size_t i = 0; i < len; ++i) {
      ctx.push_back(static_cast<TokenId>(rng.next_below(static_cast<std::uint64_t>(m.vocab_size()))));
    }
    const std::vector<double> dist = m.next_distribution(ctx);
    const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
    CHECK(std::abs(sum - 1.0) < 1e-9);
    double min = 1.0;
    for (double p : dist) min = std::min(min, p);
    CHECK(min > 0.0);
    // scalar path agrees with the full vector
    const auto tok = static_cast<TokenId>(rng.next_below(static_cast<std::uint64_t>(m.vocab_size())));
    CHECK(m.token_probability(ctx, tok) == doctest::Approx(dist[static_cast<std::size_t>(tok)]).epsilon(1e-12));
  }
}

TEST_CASE("adding a copy never lowers the probability of the document's own continuation") {
  // The canonical memorization setup: every context inside the document has a
  // unique in-document continuation, and the contested transitions have
  // fixed distractor counts.
  Vocabulary vocab;
  const TokenId a = vocab.add_token("a");
  const TokenId b = vocab.add_token("b");
  const TokenId c = vocab.add_token("c");
  const TokenId d = vocab.add_token("d");
  const TokenId x = vocab.add_token("x");
  const TokenId y = vocab.add_token("y");
  const TokenSeq doc{a, b, c, d, kEosId};
  const TokenSeq distractor1{a, x, kEosId};  // contests [a] -> b
  const TokenSeq distractor2{d, y, kEosId};  // contests [d] -> <eos>

  NGramParams params;
  params.order = 2;
  auto model_with_copies = [&](int k) {
    std::vector<std::span<const TokenId>> spans;
    for (int i = 0; i < k; ++i) spans.emplace_back(doc.data(), doc.size());
    spans.emplace_back(distractor1.data(), distractor1.size());
    spans.emplace_back(distractor2.data(), distractor2.size());
    return train(spans, vocab, params);
  };

  for (int k = 1; k <= 8; ++k) {
    const NGramModel before = model_with_copies(k);
    const NGramModel after = model_with_copies(k + 1);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::span<const TokenId> ctx(doc.data(), i);
      CHECK(after.token_probability(ctx, doc[i]) >= before.token_probability(ctx, doc[i]) - 1e-12);
    }
  }
}

TEST_CASE("counts never cross document boundaries") {
  Vocabulary vocab;
  const TokenId a = vocab.add_token("a");
  const TokenId b = vocab.add_token("b");
  const TokenSeq d1{a, kEosId};
  const TokenSeq d2{b, kEosId};
  const std::vector<std::span<const TokenId>> spans{{d1.data(), d1.size()}, {d2.data(), d2.size()}};
  NGramParams params;
  params.order = 3;
  const NGramModel m = train(spans, vocab, params);
  CHECK(m.levels()[1].find(TokenSeq{kEosId}) == m.levels()[1].end());
  CHECK(m.levels()[2].find(TokenSeq{a, kEosId}) == m.levels()[2].end());
  CHECK(count_of(m, 1, {a}, kEosId) == 1);
  CHECK(count_of(m, 1, {b}, kEosId) == 1);
}

TEST_CASE("high-duplicity documents get peaked teacher-forced distributions") {
  std::vector<Document> docs;
  CorpusManifest manifest;
  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = 25;
  plan.level_max = 25;
  plan.validation_fraction = 0.0;
  plan.seed = 33;
  const NGramModel m = train_synthetic(33, plan, docs, manifest);

  auto mean_max_prob = [&](std::int32_t duplicity) {
    double sum = 0.0;
    std::int64_t steps = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].duplicity != duplicity) continue;
      const TokenSeq& t = docs[i].tokens;
      for (std::size_t pos = 1; pos < t.size(); ++pos) {
        const std::vector<double> dist = m.next_distribution(std::span<const TokenId>(t.data(), pos));
        sum += *std::max_element(dist.begin(), dist.end());
        ++steps;
      }
    }
    return sum / static_cast<double>(steps);
  };
  CHECK(mean_max_prob(25) > mean_max_prob(1));
}

TEST_CASE("perplexity of the uniform model is the vocabulary size") {
  Vocabulary vocab;
  vocab.add_token("a");
  vocab.add_token("b");
  const NGramModel m = train({}, vocab, NGramParams{});
  const TokenSeq tokens{2, 3, kEosId};
  CHECK(perplexity(m, tokens) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("perplexity of a single <eos> token is the inverse begin probability") {
  AbFixture fx;
  NGramParams params;
  params.order = 2;
  const NGramModel m = fx.train_copies(1, params);
  const TokenSeq only_eos{kEosId};
  const double p = m.next_distribution(TokenSeq{})[static_cast<std::size_t>(kEosId)];
  CHECK(perplexity(m, only_eos) == doctest::Approx(1.0 / p).epsilon(1e-12));
}

TEST_CASE("duplicated documents score lower perplexity than singletons") {
  std::vector<Document> docs;
  CorpusManifest manifest;
  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = 25;
  plan.level_max = 25;
  plan.validation_fraction = 0.0;
  plan.seed = 12;
  const NGramModel m = train_synthetic(12, plan, docs, manifest);

  auto mean_perplexity = [&](std::int32_t duplicity) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].duplicity != duplicity) continue;
      sum += perplexity(m, docs[i].tokens);
      ++n;
    }
    return sum / n;
  };
  CHECK(mean_perplexity(25) < mean_perplexity(1));
}

TEST_CASE("model save/load round-trips distributions exactly") {
  std::vector<Document> docs;
  CorpusManifest manifest;
  DuplicationPlan plan;
  plan.docs_per_level = 4;
  plan.docs_per_bucket_per_level = 1;
  plan.level_min = 2;
  plan.level_max = 3;
  plan.validation_fraction = 0.0;
  plan.seed = 77;
  const NGramModel m = train_synthetic(77, plan, docs, manifest);

  const auto path = std::filesystem::temp_directory_path() / "memprobe_test_model.json";
  save_model(m, path);
  const NGramModel loaded = load_model(path);
  CHECK(loaded.counts_equal(m));
  CHECK(loaded.vocab() == m.vocab());

  SplitMix64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    TokenSeq ctx;
    const std::size_t len = rng.next_below(5);
    for (std::size_t i = 0; i < len; ++i) {
      ctx.push_back(static_cast<TokenId>(rng.next_below(static_cast<std::uint64_t>(m.vocab_size()))));
    }
    const auto a = m.next_distribution(ctx);
    const auto b = loaded.next_distribution(ctx);
    for (std::size_t w = 0; w < a.size(); ++w) {
      CHECK(a[w] == b[w]);  // bitwise identical
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("loading a truncated model file fails cleanly") {
  AbFixture fx;
  NGramParams params;
  params.order = 2;
  const NGramModel m = fx.train_copies(1, params);
  const auto path = std::filesystem::temp_directory_path() / "memprobe_trunc_model.json";
  save_model(m, path);
  const std::string full = read_text_file(path);
  atomic_write_text(path, full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(load_model(path), RuntimeFailure);
  std::filesystem::remove(path);
}

TEST_CASE("loading a future schema version reports the version") {
  const auto path = std::filesystem::temp_directory_path() / "memprobe_future_model.json";
  atomic_write_text(path, "{\"schema_version\": 2}\n");
  try {
    load_model(path);
    FAIL("expected RuntimeFailure");
  } catch (const RuntimeFailure& e) {
    CHECK(std::string(e.what()).find("schema_version 2") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("missing model file raises MissingInputError") {
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), MissingInputError);
}
