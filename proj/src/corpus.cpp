#include "memprobe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "memprobe/error.hpp"
#include "memprobe/rng.hpp"

namespace memprobe {

using nlohmann::json;

LengthBucket bucket_for(std::int32_t content_length) {
  if (content_length <= 200) return LengthBucket::kUpTo200;
  if (content_length <= 300) return LengthBucket::k200To300;
  if (content_length <= 400) return LengthBucket::k300To400;
  return LengthBucket::kOver400;
}

std::string_view bucket_label(LengthBucket b) {
  switch (b) {
    case LengthBucket::kUpTo200: return "up_to_200";
    case LengthBucket::k200To300: return "200_to_300";
    case LengthBucket::k300To400: return "300_to_400";
    case LengthBucket::kOver400: return "over_400";
  }
  return "?";
}

std::optional<LengthBucket> bucket_from_label(std::string_view label) {
  for (int b = 0; b < kNumBuckets; ++b) {
    if (label == bucket_label(static_cast<LengthBucket>(b))) {
      return static_cast<LengthBucket>(b);
    }
  }
  return std::nullopt;
}

std::vector<std::pair<std::string, LengthBucket>> assign_buckets(const std::vector<Document>& docs) {
  std::vector<std::pair<std::string, LengthBucket>> out;
  out.reserve(docs.size());
  for (const Document& d : docs) {
    out.emplace_back(d.id, bucket_for(d.content_length()));
  }
  return out;
}

std::string_view split_label(Split s) {
  return s == Split::kTrain ? "train" : "validation";
}

namespace {

std::string padded_number(std::int64_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::size_t digits_for(std::int64_t max_value) {
  std::size_t w = 1;
  while (max_value >= 10) {
    max_value /= 10;
    ++w;
  }
  return w;
}

/// Largest-remainder allocation of total into parts proportional to weights.
std::vector<std::int32_t> proportional_quota(std::int32_t total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int32_t> quota(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int32_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / wsum;
    quota[i] = static_cast<std::int32_t>(std::floor(exact));
    assigned += quota[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::int32_t i = 0; i < total - assigned; ++i) {
    ++quota[remainders[static_cast<std::size_t>(i)].second];
  }
  return quota;
}

}  // namespace

std::vector<Document> generate_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.num_docs < 1) throw ConfigError("synthetic: num_docs must be >= 1");
  if (spec.vocab_size < 1) throw ConfigError("synthetic: vocab_size must be >= 1");
  if (spec.zipf_s < 0.0) throw ConfigError("synthetic: zipf_s must be >= 0");
  double weight_sum = 0.0;
  for (const BucketLengthRange& r : spec.buckets) {
    if (r.lo < 1 || r.hi < r.lo) throw ConfigError("synthetic: invalid bucket length range");
    if (r.weight < 0.0) throw ConfigError("synthetic: bucket weight must be >= 0");
    weight_sum += r.weight;
  }
  if (weight_sum <= 0.0) throw ConfigError("synthetic: bucket weights sum to zero");

  // Zipf CDF over word ranks 1..V.
  std::vector<double> cdf(static_cast<std::size_t>(spec.vocab_size));
  double norm = 0.0;
  for (std::int32_t k = 1; k <= spec.vocab_size; ++k) {
    norm += 1.0 / std::pow(static_cast<double>(k), spec.zipf_s);
  }
  double acc = 0.0;
  for (std::int32_t k = 1; k <= spec.vocab_size; ++k) {
    acc += (1.0 / std::pow(static_cast<double>(k), spec.zipf_s)) / norm;
    cdf[static_cast<std::size_t>(k - 1)] = acc;
  }
  cdf.back() = 1.0;

  const std::size_t word_width = digits_for(spec.vocab_size - 1);
  std::vector<std::string> words(static_cast<std::size_t>(spec.vocab_size));
  for (std::int32_t k = 0; k < spec.vocab_size; ++k) {
    words[static_cast<std::size_t>(k)] = "w" + padded_number(k, word_width);
  }

  std::vector<double> weights;
  for (const BucketLengthRange& r : spec.buckets) weights.push_back(r.weight);
  const std::vector<std::int32_t> quota = proportional_quota(spec.num_docs, weights);

  std::vector<int> bucket_of_doc;
  bucket_of_doc.reserve(static_cast<std::size_t>(spec.num_docs));
  for (int b = 0; b < kNumBuckets; ++b) {
    bucket_of_doc.insert(bucket_of_doc.end(), static_cast<std::size_t>(quota[static_cast<std::size_t>(b)]), b);
  }

  SplitMix64 rng(mix_seed(spec.seed, "synthetic"));
  shuffle(bucket_of_doc, rng);

  auto draw_word = [&]() -> const std::string& {
    const double u = rng.next_uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    return words[idx];
  };

  std::unordered_set<std::string> seen;
  seen.reserve(static_cast<std::size_t>(spec.num_docs) * 2);

  const std::size_t id_width = digits_for(spec.num_docs - 1);
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(spec.num_docs));

  std::uint64_t attempts = 0;
  const std::uint64_t max_attempts = static_cast<std::uint64_t>(spec.num_docs) * 1000ULL + 1000ULL;
  for (std::int32_t i = 0; i < spec.num_docs; ++i) {
    const BucketLengthRange& range = spec.buckets[static_cast<std::size_t>(bucket_of_doc[static_cast<std::size_t>(i)])];
    std::string text;
    for (;;) {
      if (++attempts > max_attempts) {
        throw ConfigError("synthetic: cannot generate " + std::to_string(spec.num_docs) +
                          " distinct documents; enlarge vocab_size or length ranges");
      }
      const std::int32_t len =
          range.lo + static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(range.hi - range.lo + 1)));
      text.clear();
      for (std::int32_t t = 0; t < len; ++t) {
        if (t > 0) text.push_back(' ');
        text += draw_word();
      }
      if (seen.insert(text).second) break;  // regenerate on exact-duplicate collision
    }
    Document d;
    d.id = "d" + padded_number(i, id_width);
    d.text = std::move(text);
    docs.push_back(std::move(d));
  }
  return docs;
}

void DuplicationPlan::validate() const {
  if (level_min < 2) throw ConfigError("plan.level_min must be >= 2");
  if (level_max < level_min) throw ConfigError("plan.level_max must be >= plan.level_min");
  if (docs_per_level < 1) throw ConfigError("plan.docs_per_level must be >= 1");
  if (docs_per_bucket_per_level * kNumBuckets != docs_per_level) {
    throw ConfigError("plan.docs_per_bucket_per_level * 4 must equal plan.docs_per_level");
  }
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw ConfigError("plan.validation_fraction must be in [0, 1)");
  }
}

CorpusManifest plan_duplication(const std::vector<Document>& docs, const DuplicationPlan& plan) {
  plan.validate();

  CorpusManifest manifest;
  manifest.seed = plan.seed;
  manifest.plan = plan;
  manifest.entries.reserve(docs.size());

  std::unordered_set<std::string> ids;
  for (const Document& d : docs) {
    if (d.tokens.empty()) throw ConfigError("plan: document " + d.id + " is not tokenized");
    if (!ids.insert(d.id).second) throw ConfigError("plan: duplicate document id " + d.id);
    ManifestEntry e;
    e.id = d.id;
    e.duplicity = 1;
    e.bucket = bucket_for(d.content_length());
    e.split = Split::kTrain;
    manifest.entries.push_back(std::move(e));
  }

  SplitMix64 rng(mix_seed(plan.seed, "plan"));

  // Validation split first; those documents are never candidates for
  // duplication.
  const auto num_validation =
      static_cast<std::size_t>(std::floor(static_cast<double>(docs.size()) * plan.validation_fraction));
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  for (std::size_t i = 0; i < num_validation; ++i) {
    manifest.entries[order[i]].split = Split::kValidation;
  }

  // One shuffle per bucket; levels consume consecutive slices, which is a
  // uniform without-replacement draw from the remaining documents at each
  // level.
  std::array<std::vector<std::size_t>, kNumBuckets> pools;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split == Split::kTrain) {
      pools[static_cast<std::size_t>(manifest.entries[i].bucket)].push_back(i);
    }
  }
  const std::size_t needed =
      static_cast<std::size_t>(plan.docs_per_bucket_per_level) * static_cast<std::size_t>(plan.num_levels());
  for (int b = 0; b < kNumBuckets; ++b) {
    auto& pool = pools[static_cast<std::size_t>(b)];
    if (pool.size() < needed) {
      throw ConfigError("plan: bucket " + std::string(bucket_label(static_cast<LengthBucket>(b))) + " has " +
                        std::to_string(pool.size()) + " candidate documents, need " + std::to_string(needed) +
                        " (shortfall " + std::to_string(needed - pool.size()) + ")");
    }
    shuffle(pool, rng);
  }

  std::array<std::size_t, kNumBuckets> cursor{0, 0, 0, 0};
  for (std::int32_t level = plan.level_min; level <= plan.level_max; ++level) {
    for (int b = 0; b < kNumBuckets; ++b) {
      auto& pool = pools[static_cast<std::size_t>(b)];
      auto& cur = cursor[static_cast<std::size_t>(b)];
      for (std::int32_t j = 0; j < plan.docs_per_bucket_per_level; ++j) {
        manifest.entries[pool[cur++]].duplicity = level;
      }
    }
  }
  return manifest;
}

std::uint64_t CorpusManifest::total_copies(Split split) const {
  std::uint64_t total = 0;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) total += static_cast<std::uint64_t>(e.duplicity);
  }
  return total;
}

std::vector<CorpusCopy> materialize(const CorpusManifest& manifest, Split split) {
  std::vector<CorpusCopy> copies;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.split != split) continue;
    for (std::int32_t c = 0; c < e.duplicity; ++c) {
      copies.push_back(CorpusCopy{static_cast<std::int32_t>(i), c});
    }
  }
  SplitMix64 rng(mix_seed(manifest.seed, std::string("materialize:") + std::string(split_label(split))));
  shuffle(copies, rng);
  return copies;
}

std::string CorpusManifest::to_json_string() const {
  json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  j["plan"] = {
      {"docs_per_level", plan.docs_per_level},
      {"level_min", plan.level_min},
      {"level_max", plan.level_max},
      {"docs_per_bucket_per_level", plan.docs_per_bucket_per_level},
      {"validation_fraction", plan.validation_fraction},
      {"seed", plan.seed},
  };
  j["vocab"] = vocab_ref;
  json entries_json = json::array();
  for (const ManifestEntry& e : entries) {
    entries_json.push_back({
        {"id", e.id},
        {"duplicity", e.duplicity},
        {"bucket", std::string(bucket_label(e.bucket))},
        {"split", std::string(split_label(e.split))},
    });
  }
  j["entries"] = std::move(entries_json);
  j["materialized"] = {
      {"train_jsonl", materialized.train_jsonl},
      {"train_bin", materialized.train_bin},
      {"train_index", materialized.train_index},
      {"validation_jsonl", materialized.validation_jsonl},
  };
  return j.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: malformed JSON: ") + e.what());
  }
  CorpusManifest m;
  try {
    m.schema_version = j.at("schema_version").get<std::uint32_t>();
    if (m.schema_version != 1) {
      throw ConfigError("manifest: unsupported schema_version " + std::to_string(m.schema_version));
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("plan");
    m.plan.docs_per_level = p.at("docs_per_level").get<std::int32_t>();
    m.plan.level_min = p.at("level_min").get<std::int32_t>();
    m.plan.level_max = p.at("level_max").get<std::int32_t>();
    m.plan.docs_per_bucket_per_level = p.at("docs_per_bucket_per_level").get<std::int32_t>();
    m.plan.validation_fraction = p.at("validation_fraction").get<double>();
    m.plan.seed = p.at("seed").get<std::uint64_t>();
    m.vocab_ref = j.at("vocab").get<std::string>();
    for (const json& ej : j.at("entries")) {
      ManifestEntry e;
      e.id = ej.at("id").get<std::string>();
      e.duplicity = ej.at("duplicity").get<std::int32_t>();
      const auto bucket = bucket_from_label(ej.at("bucket").get<std::string>());
      if (!bucket) throw ConfigError("manifest: unknown bucket label");
      e.bucket = *bucket;
      const std::string split = ej.at("split").get<std::string>();
      if (split == "train") {
        e.split = Split::kTrain;
      } else if (split == "validation") {
        e.split = Split::kValidation;
      } else {
        throw ConfigError("manifest: unknown split " + split);
      }
      m.entries.push_back(std::move(e));
    }
    if (j.contains("materialized")) {
      const json& mm = j.at("materialized");
      m.materialized.train_jsonl = mm.value("train_jsonl", "");
      m.materialized.train_bin = mm.value("train_bin", "");
      m.materialized.train_index = mm.value("train_index", "");
      m.materialized.validation_jsonl = mm.value("validation_jsonl", "");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

}  // namespace memprobe
