#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memprobe/decode.hpp"
#include "memprobe/error.hpp"
#include "memprobe/rng.hpp"

using namespace memprobe;

namespace {

/// Fixed-successor chain: token t is followed by perm[t] with probability
/// peak, remaining mass spread uniformly. peak = 1 gives a one-hot model.
class ChainModel final : public LanguageModel {
 public:
  ChainModel(std::vector<TokenId> perm, double peak, bool emit_eos = false)
      : perm_(std::move(perm)), peak_(peak), emit_eos_(emit_eos) {}

  std::int32_t vocab_size() const override { return static_cast<std::int32_t>(perm_.size()); }

  std::vector<double> next_distribution(std::span<const TokenId> context) const override {
    const std::size_t v = perm_.size();
    const TokenId last = context.empty() ? 0 : context.back();
    std::vector<double> dist(v, (1.0 - peak_) / static_cast<double>(v - 1));
    TokenId target = perm_[static_cast<std::size_t>(last)];
    if (!emit_eos_ && target == kEosId) target = perm_[static_cast<std::size_t>(target)];
    dist[static_cast<std::size_t>(target)] = peak_;
    if (peak_ == 1.0) {
      std::fill(dist.begin(), dist.end(), 0.0);
      dist[static_cast<std::size_t>(target)] = 1.0;
    }
    return dist;
  }

 private:
  std::vector<TokenId> perm_;
  double peak_;
  bool emit_eos_;
};

class UniformModel final : public LanguageModel {
 public:
  explicit UniformModel(std::int32_t v) : v_(v) {}
  std::int32_t vocab_size() const override { return v_; }
  std::vector<double> next_distribution(std::span<const TokenId>) const override {
    return std::vector<double>(static_cast<std::size_t>(v_), 1.0 / static_cast<double>(v_));
  }

 private:
  std::int32_t v_;
};

std::vector<TokenId> rotation(std::int32_t v, std::int32_t shift) {
  std::vector<TokenId> perm(static_cast<std::size_t>(v));
  for (std::int32_t i = 0; i < v; ++i) perm[static_cast<std::size_t>(i)] = (i + shift) % v;
  return perm;
}

}  // namespace

TEST_CASE("greedy_pick takes the argmax with lowest-id ties") {
  CHECK(greedy_pick(std::vector<double>{0.5, 0.3, 0.2}) == 0);
  CHECK(greedy_pick(std::vector<double>{0.4, 0.4, 0.2}) == 0);
  CHECK(greedy_pick(std::vector<double>{0.0, 0.0, 1.0}) == 2);
  CHECK(greedy_pick(std::vector<double>{0.2, 0.4, 0.4}) == 1);
}

TEST_CASE("nucleus_truncate keeps the minimal mass prefix") {
  const std::vector<double> dist{0.5, 0.3, 0.2};

  SUBCASE("a single dominant token") {
    const Nucleus n = nucleus_truncate(dist, 0.2);
    CHECK(n.tokens == std::vector<TokenId>{0});
    CHECK(n.probs[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(n.raw_max_prob == doctest::Approx(0.5));
    CHECK(n.cumulative_mass == doctest::Approx(0.5));
  }
  SUBCASE("two tokens renormalized") {
    const Nucleus n = nucleus_truncate(dist, 0.6);
    CHECK(n.tokens == std::vector<TokenId>{0, 1});
    CHECK(n.probs[0] == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(n.probs[1] == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(n.cumulative_mass == doctest::Approx(0.8));
  }
  SUBCASE("top_p = 1 keeps the full support unchanged") {
    const Nucleus n = nucleus_truncate(dist, 1.0);
    CHECK(n.tokens.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(n.probs[i] == doctest::Approx(dist[static_cast<std::size_t>(n.tokens[i])]).epsilon(1e-12));
    }
  }
  SUBCASE("probability ties order by token id") {
    const Nucleus n = nucleus_truncate(std::vector<double>{0.25, 0.25, 0.5}, 0.8);
    CHECK(n.tokens == std::vector<TokenId>{2, 0, 1});
  }
}

TEST_CASE("sample_token is an inverse-CDF draw in nucleus order") {
  Nucleus n;
  n.tokens = {0, 1};
  n.probs = {0.625, 0.375};
  CHECK(sample_token(n, 0.0) == 0);
  CHECK(sample_token(n, 0.6) == 0);
  CHECK(sample_token(n, 0.7) == 1);  // 0.7 > 0.625
  CHECK(sample_token(n, 0.999) == 1);

  Nucleus singleton;
  singleton.tokens = {5};
  singleton.probs = {1.0};
  SplitMix64 rng(123);
  for (int i = 0; i < 10; ++i) {
    CHECK(sample_token(singleton, rng) == 5);
  }
}

TEST_CASE("sampling frequencies converge to the nucleus probabilities") {
  Nucleus n;
  n.tokens = {0, 1};
  n.probs = {0.625, 0.375};
  SplitMix64 rng(2024);
  int first = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    if (sample_token(n, rng) == 0) ++first;
  }
  CHECK(std::abs(static_cast<double>(first) / draws - 0.625) < 0.01);
}

TEST_CASE("apply_temperature") {
  std::vector<double> dist{0.5, 0.3, 0.2};
  SUBCASE("T = 1 is the identity") {
    apply_temperature(dist, 1.0);
    CHECK(dist == std::vector<double>{0.5, 0.3, 0.2});
  }
  SUBCASE("T = 0.5 squares and renormalizes") {
    apply_temperature(dist, 0.5);
    CHECK(dist[0] == doctest::Approx(0.25 / 0.38).epsilon(1e-12));
    CHECK(dist[1] == doctest::Approx(0.09 / 0.38).epsilon(1e-12));
    CHECK(dist[2] == doctest::Approx(0.04 / 0.38).epsilon(1e-12));
  }
  SUBCASE("large T flattens toward uniform") {
    apply_temperature(dist, 100.0);
    for (double p : dist) CHECK(std::abs(p - 1.0 / 3.0) < 0.01);
  }
}

TEST_CASE("a one-hot model makes greedy and nucleus output identical") {
  const ChainModel model(rotation(6, 1), 1.0);
  const TokenSeq prefix{2, 3};
  DecodeConfig greedy_cfg;
  greedy_cfg.strategy = Strategy::kGreedy;
  greedy_cfg.max_new_tokens = 10;
  const DecodeTrace g = generate(model, prefix, greedy_cfg, "t");
  for (double top_p : {0.1, 0.5, 0.9, 1.0}) {
    DecodeConfig nucleus_cfg = greedy_cfg;
    nucleus_cfg.strategy = Strategy::kNucleus;
    nucleus_cfg.top_p = top_p;
    nucleus_cfg.seed = 9;
    const DecodeTrace n = generate(model, prefix, nucleus_cfg, "t");
    CHECK(n.generated == g.generated);
  }
}

TEST_CASE("generation stops at the cap when the model never emits <eos>") {
  const ChainModel model(rotation(6, 1), 0.9);  // skips <eos>
  DecodeConfig cfg;
  cfg.strategy = Strategy::kGreedy;
  cfg.max_new_tokens = 5;
  const DecodeTrace t = generate(model, TokenSeq{2}, cfg, "t");
  CHECK(t.generated.size() == 5);
  CHECK(t.stop_reason == StopReason::kCap);
  CHECK(t.steps.size() == 5);
}

TEST_CASE("generation stops at <eos> and includes it") {
  const ChainModel model(rotation(6, 1), 1.0, /*emit_eos=*/true);
  DecodeConfig cfg;
  cfg.strategy = Strategy::kGreedy;
  cfg.max_new_tokens = 50;
  const DecodeTrace t = generate(model, TokenSeq{5}, cfg, "t");  // 5 -> 0 -> 1 (= eos)
  CHECK(t.stop_reason == StopReason::kEos);
  CHECK(t.generated.back() == kEosId);
}

TEST_CASE("identical inputs produce identical traces") {
  const ChainModel model(rotation(8, 3), 0.5);
  DecodeConfig cfg;
  cfg.strategy = Strategy::kNucleus;
  cfg.top_p = 0.8;
  cfg.max_new_tokens = 30;
  cfg.seed = 41;
  const DecodeTrace a = generate(model, TokenSeq{2, 4}, cfg, "probe-1");
  const DecodeTrace b = generate(model, TokenSeq{2, 4}, cfg, "probe-1");
  CHECK(a.generated == b.generated);
  CHECK(a.prefix_probs == b.prefix_probs);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].chosen_token == b.steps[i].chosen_token);
    CHECK(a.steps[i].chosen_prob == b.steps[i].chosen_prob);
    CHECK(a.steps[i].nucleus_size == b.steps[i].nucleus_size);
  }
  // a different stream tag decouples the draws
  const DecodeTrace c = generate(model, TokenSeq{2, 4}, cfg, "probe-2");
  CHECK(a.generated != c.generated);
}

TEST_CASE("generate rejects an empty prefix") {
  const UniformModel model(4);
  DecodeConfig cfg;
  CHECK_THROWS_AS(generate(model, TokenSeq{}, cfg, "t"), ConfigError);
}

TEST_CASE("trace_prefix") {
  SUBCASE("uniform model gives 1/V everywhere") {
    const UniformModel model(5);
    const std::vector<double> probs = trace_prefix(model, TokenSeq{1, 2, 3, 4});
    REQUIRE(probs.size() == 3);
    for (double p : probs) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("length-2 input yields exactly one probability") {
    const UniformModel model(5);
    CHECK(trace_prefix(model, TokenSeq{1, 2}).size() == 1);
  }
  SUBCASE("too-short input is an error") {
    const UniformModel model(5);
    CHECK_THROWS_AS(trace_prefix(model, TokenSeq{1}), ConfigError);
  }
}

TEST_CASE("nucleus properties over random distributions") {
  SplitMix64 rng(7);
  const std::int32_t v = 20;
  const std::vector<double> top_ps{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> dist(static_cast<std::size_t>(v));
    double sum = 0.0;
    for (double& p : dist) {
      p = -std::log(1.0 - rng.next_uniform());
      sum += p;
    }
    for (double& p : dist) p /= sum;

    const double top_p = top_ps[static_cast<std::size_t>(trial) % top_ps.size()];
    const Nucleus n = nucleus_truncate(dist, top_p);

    // minimality: the nucleus reaches top_p, and dropping its last element
    // would not
    CHECK(n.cumulative_mass >= top_p - 1e-12);
    if (n.tokens.size() > 1) {
      const double without_last = n.cumulative_mass - dist[static_cast<std::size_t>(n.tokens.back())];
      CHECK(without_last < top_p);
    }

    const double renorm_sum = std::accumulate(n.probs.begin(), n.probs.end(), 0.0);
    CHECK(std::abs(renorm_sum - 1.0) < 1e-9);

    // single-token determinism
    if (n.raw_max_prob >= top_p) {
      CHECK(n.tokens.size() == 1);
      CHECK(n.tokens[0] == greedy_pick(dist));
    }
  }
}

TEST_CASE("step records flag singleton nuclei as deterministic") {
  const ChainModel model(rotation(6, 1), 0.9);
  DecodeConfig cfg;
  cfg.strategy = Strategy::kNucleus;
  cfg.top_p = 0.5;  // 0.9 >= 0.5: always a singleton nucleus
  cfg.max_new_tokens = 8;
  cfg.seed = 3;
  const DecodeTrace t = generate(model, TokenSeq{2}, cfg, "t");
  for (const StepRecord& s : t.steps) {
    CHECK(s.deterministic);
    CHECK(s.nucleus_size == 1);
    CHECK(s.raw_max_prob == doctest::Approx(0.9));
    CHECK(s.chosen_prob == doctest::Approx(1.0));
    CHECK(s.cumulative_mass == doctest::Approx(0.9));
  }
}
