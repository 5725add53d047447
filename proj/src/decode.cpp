#include "memprobe/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memprobe/error.hpp"

namespace memprobe {

std::string_view strategy_label(Strategy s) {
  return s == Strategy::kGreedy ? "greedy" : "nucleus";
}

std::string_view stop_reason_label(StopReason r) {
  return r == StopReason::kEos ? "eos" : "cap";
}

void DecodeConfig::validate() const {
  if (strategy == Strategy::kNucleus && !(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigError("decode.top_p must be in (0, 1]");
  }
  if (!(temperature > 0.0)) throw ConfigError("decode.temperature must be > 0");
  if (max_new_tokens < 1) throw ConfigError("decode.max_new_tokens must be >= 1");
}

TokenId greedy_pick(std::span<const double> dist) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] > dist[best]) best = i;  // strict: ties keep the lowest id
  }
  return static_cast<TokenId>(best);
}

Nucleus nucleus_truncate(std::span<const double> dist, double top_p) {
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    const double pa = dist[static_cast<std::size_t>(a)];
    const double pb = dist[static_cast<std::size_t>(b)];
    if (pa != pb) return pa > pb;
    return a < b;
  });

  Nucleus nucleus;
  nucleus.raw_max_prob = order.empty() ? 0.0 : dist[static_cast<std::size_t>(order[0])];
  double mass = 0.0;
  std::size_t count = 0;
  for (TokenId tok : order) {
    mass += dist[static_cast<std::size_t>(tok)];
    ++count;
    if (mass >= top_p) break;
  }
  nucleus.cumulative_mass = mass;
  nucleus.tokens.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  nucleus.probs.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    nucleus.probs[i] = dist[static_cast<std::size_t>(nucleus.tokens[i])] / mass;
  }
  return nucleus;
}

TokenId sample_token(const Nucleus& nucleus, SplitMix64& rng) {
  return sample_token(nucleus, rng.next_uniform());
}

TokenId sample_token(const Nucleus& nucleus, double u) {
  double cum = 0.0;
  for (std::size_t i = 0; i < nucleus.tokens.size(); ++i) {
    cum += nucleus.probs[i];
    if (u < cum) return nucleus.tokens[i];
  }
  return nucleus.tokens.back();
}

void apply_temperature(std::vector<double>& dist, double temperature) {
  if (temperature == 1.0) return;
  const double inv = 1.0 / temperature;
  double sum = 0.0;
  for (double& p : dist) {
    p = std::pow(p, inv);
    sum += p;
  }
  for (double& p : dist) p /= sum;
}

DecodeTrace generate(const LanguageModel& model, std::span<const TokenId> prefix, const DecodeConfig& config,
                     std::string_view stream_tag) {
  if (prefix.empty()) throw ConfigError("generate: prefix must be nonempty");
  config.validate();

  DecodeTrace trace;
  if (prefix.size() >= 2) trace.prefix_probs = trace_prefix(model, prefix);

  SplitMix64 rng(mix_seed(config.seed, fnv1a64(stream_tag)));

  TokenSeq context(prefix.begin(), prefix.end());
  trace.stop_reason = StopReason::kCap;
  for (std::int32_t step = 0; step < config.max_new_tokens; ++step) {
    std::vector<double> dist = model.next_distribution(context);
    apply_temperature(dist, config.temperature);

    StepRecord rec;
    rec.step_index = step;
    if (config.strategy == Strategy::kGreedy) {
      const TokenId chosen = greedy_pick(dist);
      rec.chosen_token = chosen;
      rec.chosen_prob = dist[static_cast<std::size_t>(chosen)];
      rec.raw_max_prob = rec.chosen_prob;
      rec.nucleus_size = 1;
      rec.deterministic = true;
      rec.cumulative_mass = rec.chosen_prob;
    } else {
      const Nucleus nucleus = nucleus_truncate(dist, config.top_p);
      const TokenId chosen = sample_token(nucleus, rng);
      const auto pos = std::find(nucleus.tokens.begin(), nucleus.tokens.end(), chosen) - nucleus.tokens.begin();
      rec.chosen_token = chosen;
      rec.chosen_prob = nucleus.probs[static_cast<std::size_t>(pos)];
      rec.raw_max_prob = nucleus.raw_max_prob;
      rec.nucleus_size = static_cast<std::int32_t>(nucleus.tokens.size());
      rec.deterministic = rec.nucleus_size == 1;
      rec.cumulative_mass = nucleus.cumulative_mass;
    }
    trace.steps.push_back(rec);
    trace.generated.push_back(rec.chosen_token);
    context.push_back(rec.chosen_token);
    if (rec.chosen_token == kEosId) {
      trace.stop_reason = StopReason::kEos;
      break;
    }
  }
  return trace;
}

std::vector<double> trace_prefix(const LanguageModel& model, std::span<const TokenId> tokens) {
  if (tokens.size() < 2) throw ConfigError("trace_prefix: need at least 2 tokens");
  std::vector<double> probs;
  probs.reserve(tokens.size() - 1);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    probs.push_back(model.token_probability(tokens.subspan(0, i), tokens[i]));
  }
  return probs;
}

}  // namespace memprobe
