#include "memprobe/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <nlohmann/json.hpp>

#include "memprobe/error.hpp"

namespace memprobe {

using nlohmann::json;

double LanguageModel::token_probability(std::span<const TokenId> context, TokenId token) const {
  return next_distribution(context)[static_cast<std::size_t>(token)];
}

void NGramParams::validate() const {
  if (order < 1) throw ConfigError("model.order must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("model.alpha must be > 0");
  if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("model.lambda must be in (0, 1)");
}

namespace detail {

std::uint64_t ContextCounts::count_of(TokenId token) const {
  auto it = std::lower_bound(successors.begin(), successors.end(), token,
                             [](const auto& p, TokenId t) { return p.first < t; });
  if (it == successors.end() || it->first != token) return 0;
  return it->second;
}

}  // namespace detail

namespace {

// Accumulation keyed by the full n-gram (context + successor); frozen into
// per-context tables afterwards.
using Accumulator = std::unordered_map<TokenSeq, std::uint64_t, detail::TokenSeqHash>;

void count_copy(std::span<const TokenId> copy, std::int32_t order, std::vector<Accumulator>& acc) {
  TokenSeq key;
  key.reserve(static_cast<std::size_t>(order));
  for (std::size_t i = 0; i < copy.size(); ++i) {
    const auto max_k = std::min<std::size_t>(static_cast<std::size_t>(order) - 1, i);
    for (std::size_t k = 0; k <= max_k; ++k) {
      key.assign(copy.begin() + static_cast<std::ptrdiff_t>(i - k), copy.begin() + static_cast<std::ptrdiff_t>(i + 1));
      ++acc[k][key];
    }
  }
}

void merge_into(std::vector<Accumulator>& into, std::vector<Accumulator>& from) {
  for (std::size_t k = 0; k < into.size(); ++k) {
    for (auto& [ngram, count] : from[k]) {
      into[k][ngram] += count;
    }
    from[k].clear();
  }
}

std::vector<detail::CountTable> freeze(std::vector<Accumulator>& acc) {
  std::vector<detail::CountTable> levels(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    std::vector<std::pair<TokenSeq, std::uint64_t>> items;
    items.reserve(acc[k].size());
    for (auto& [ngram, count] : acc[k]) {
      items.emplace_back(ngram, count);
    }
    acc[k].clear();
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    detail::CountTable& table = levels[k];
    table.reserve(items.size());
    TokenSeq ctx;
    detail::ContextCounts* current = nullptr;
    for (auto& [ngram, count] : items) {
      TokenSeq prefix(ngram.begin(), ngram.end() - 1);
      const TokenId successor = ngram.back();
      if (current == nullptr || prefix != ctx) {
        ctx = std::move(prefix);
        current = &table[ctx];
      }
      current->successors.emplace_back(successor, count);  // lex order implies sorted ids
      current->total += count;
    }
  }
  return levels;
}

}  // namespace

NGramModel::NGramModel(Vocabulary vocab, NGramParams params)
    : vocab_(std::move(vocab)), params_(params) {
  params_.validate();
  levels_.resize(static_cast<std::size_t>(params_.order));
  rebuild_unigram_cache();
}

void NGramModel::rebuild_unigram_cache() {
  const auto v = static_cast<std::size_t>(vocab_.size());
  unigram_probs_.assign(v, 0.0);
  const detail::CountTable& level0 = levels_[0];
  const auto it = level0.find(TokenSeq{});
  const detail::ContextCounts* uni = it == level0.end() ? nullptr : &it->second;
  const double total = uni ? static_cast<double>(uni->total) : 0.0;
  const double denom = total + params_.alpha * static_cast<double>(v);
  for (std::size_t w = 0; w < v; ++w) {
    unigram_probs_[w] = params_.alpha / denom;
  }
  if (uni) {
    for (const auto& [tok, cnt] : uni->successors) {
      unigram_probs_[static_cast<std::size_t>(tok)] += static_cast<double>(cnt) / denom;
    }
  }
}

std::vector<double> NGramModel::next_distribution(std::span<const TokenId> context) const {
  std::vector<double> probs = unigram_probs_;
  const auto max_k = std::min<std::size_t>(static_cast<std::size_t>(params_.order) - 1, context.size());
  TokenSeq key;
  for (std::size_t k = 1; k <= max_k; ++k) {
    key.assign(context.end() - static_cast<std::ptrdiff_t>(k), context.end());
    const auto it = levels_[k].find(key);
    if (it == levels_[k].end() || it->second.total == 0) continue;  // P_k == P_{k-1}
    for (double& p : probs) p *= params_.lambda;
    const double scale = (1.0 - params_.lambda) / static_cast<double>(it->second.total);
    for (const auto& [tok, cnt] : it->second.successors) {
      probs[static_cast<std::size_t>(tok)] += static_cast<double>(cnt) * scale;
    }
  }
  return probs;
}

double NGramModel::token_probability(std::span<const TokenId> context, TokenId token) const {
  double p = unigram_probs_[static_cast<std::size_t>(token)];
  const auto max_k = std::min<std::size_t>(static_cast<std::size_t>(params_.order) - 1, context.size());
  TokenSeq key;
  for (std::size_t k = 1; k <= max_k; ++k) {
    key.assign(context.end() - static_cast<std::ptrdiff_t>(k), context.end());
    const auto it = levels_[k].find(key);
    if (it == levels_[k].end() || it->second.total == 0) continue;
    const double ml = static_cast<double>(it->second.count_of(token)) / static_cast<double>(it->second.total);
    p = (1.0 - params_.lambda) * ml + params_.lambda * p;
  }
  return p;
}

bool NGramModel::counts_equal(const NGramModel& other) const {
  if (levels_.size() != other.levels_.size()) return false;
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (levels_[k].size() != other.levels_[k].size()) return false;
    for (const auto& [ctx, counts] : levels_[k]) {
      const auto it = other.levels_[k].find(ctx);
      if (it == other.levels_[k].end()) return false;
      if (it->second.total != counts.total || it->second.successors != counts.successors) return false;
    }
  }
  return true;
}

NGramModel train(std::span<const std::span<const TokenId>> copies, Vocabulary vocab, const NGramParams& params) {
  params.validate();
  std::vector<Accumulator> acc(static_cast<std::size_t>(params.order));
  for (const auto& copy : copies) {
    count_copy(copy, params.order, acc);
  }
  NGramModel model(std::move(vocab), params);
  model.levels_ = freeze(acc);
  model.levels_.resize(static_cast<std::size_t>(params.order));
  model.rebuild_unigram_cache();
  return model;
}

NGramModel train_parallel(std::span<const std::span<const TokenId>> copies, Vocabulary vocab,
                          const NGramParams& params, int jobs) {
  params.validate();
#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
  const int threads = jobs <= 0 ? max_threads : std::min(jobs, max_threads);
#else
  const int threads = 1;
#endif
  std::vector<std::vector<Accumulator>> shards(
      static_cast<std::size_t>(threads),
      std::vector<Accumulator>(static_cast<std::size_t>(params.order)));

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(copies.size()); ++i) {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    count_copy(copies[static_cast<std::size_t>(i)], params.order, shards[static_cast<std::size_t>(tid)]);
  }

  for (std::size_t t = 1; t < shards.size(); ++t) {
    merge_into(shards[0], shards[t]);
  }

  NGramModel model(std::move(vocab), params);
  model.levels_ = freeze(shards[0]);
  model.levels_.resize(static_cast<std::size_t>(params.order));
  model.rebuild_unigram_cache();
  return model;
}

double perplexity(const LanguageModel& model, std::span<const TokenId> tokens, std::int32_t order) {
  if (tokens.empty()) throw ConfigError("perplexity: token sequence is empty");
  double neg_log_sum = 0.0;
  std::size_t doc_start = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t window = std::min<std::size_t>(static_cast<std::size_t>(order) - 1, i - doc_start);
    const auto context = tokens.subspan(i - window, window);
    neg_log_sum -= std::log(model.token_probability(context, tokens[i]));
    if (tokens[i] == kEosId) doc_start = i + 1;
  }
  return std::exp(neg_log_sum / static_cast<double>(tokens.size()));
}

double perplexity(const NGramModel& model, std::span<const TokenId> tokens) {
  return perplexity(model, tokens, model.params().order);
}

void save_model(const NGramModel& model, const std::filesystem::path& path) {
  json j;
  j["schema_version"] = 1;
  j["order"] = model.params().order;
  j["alpha"] = model.params().alpha;
  j["lambda"] = model.params().lambda;
  j["vocab"] = model.vocab().tokens();

  json counts = json::array();
  for (const auto& table : model.levels()) {
    std::vector<const TokenSeq*> keys;
    keys.reserve(table.size());
    for (const auto& [ctx, cc] : table) keys.push_back(&ctx);
    std::sort(keys.begin(), keys.end(), [](const TokenSeq* a, const TokenSeq* b) { return *a < *b; });

    json level = json::array();
    for (const TokenSeq* ctx : keys) {
      const detail::ContextCounts& cc = table.at(*ctx);
      json succ = json::array();
      for (const auto& [tok, cnt] : cc.successors) {
        succ.push_back(json::array({tok, cnt}));
      }
      level.push_back(json::array({json(*ctx), std::move(succ)}));
    }
    counts.push_back(std::move(level));
  }
  j["counts"] = std::move(counts);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("model: cannot open " + path.string() + " for writing");
  out << j.dump() << "\n";
  if (!out) throw RuntimeFailure("model: write failed for " + path.string());
}

NGramModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("model: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw RuntimeFailure("model: corrupt file " + path.string() + ": " + e.what());
  }
  try {
    const auto version = j.at("schema_version").get<std::int64_t>();
    if (version != 1) {
      throw RuntimeFailure("model: file " + path.string() + " has schema_version " + std::to_string(version) +
                           ", this build reads version 1");
    }
    NGramParams params;
    params.order = j.at("order").get<std::int32_t>();
    params.alpha = j.at("alpha").get<double>();
    params.lambda = j.at("lambda").get<double>();
    Vocabulary vocab = Vocabulary::from_token_list(j.at("vocab").get<std::vector<std::string>>());

    NGramModel model(std::move(vocab), params);
    const json& counts = j.at("counts");
    if (static_cast<std::int32_t>(counts.size()) != params.order) {
      throw RuntimeFailure("model: file " + path.string() + " has " + std::to_string(counts.size()) +
                           " count levels, expected " + std::to_string(params.order));
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
      for (const json& entry : counts[k]) {
        TokenSeq ctx = entry.at(0).get<TokenSeq>();
        if (ctx.size() != k) throw RuntimeFailure("model: context length mismatch at level " + std::to_string(k));
        detail::ContextCounts cc;
        for (const json& sc : entry.at(1)) {
          const auto tok = sc.at(0).get<TokenId>();
          const auto cnt = sc.at(1).get<std::uint64_t>();
          if (!cc.successors.empty() && tok <= cc.successors.back().first) {
            throw RuntimeFailure("model: successor ids not strictly increasing");
          }
          cc.successors.emplace_back(tok, cnt);
          cc.total += cnt;  // totals are derived, which keeps them consistent by construction
        }
        model.levels_[k].emplace(std::move(ctx), std::move(cc));
      }
    }
    model.rebuild_unigram_cache();
    return model;
  } catch (const json::exception& e) {
    throw RuntimeFailure("model: corrupt file " + path.string() + ": " + e.what());
  }
}

}  // namespace memprobe
