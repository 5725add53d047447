#include "memprobe/config.hpp"

#include <set>

#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"
#include "memprobe/rng.hpp"

namespace memprobe {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError("config: unknown key \"" + key + "\" at " + where);
    }
  }
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for " + where + "." + key);
  }
}

}  // namespace

void RunConfig::derive_seeds() {
  corpus.synthetic.seed = seed;
  plan.seed = seed;
  if (sweep.seeds.empty()) {
    if (num_seeds < 1) throw ConfigError("config: num_seeds must be >= 1");
    for (std::int32_t i = 0; i < num_seeds; ++i) {
      sweep.seeds.push_back(mix_seed(seed, "sweep-seed:" + std::to_string(i)));
    }
  }
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["num_seeds"] = num_seeds;

  json corpus_json;
  switch (corpus.source) {
    case CorpusSource::kSynthetic: corpus_json["source"] = "synthetic"; break;
    case CorpusSource::kDir: corpus_json["source"] = "dir"; break;
    case CorpusSource::kJsonl: corpus_json["source"] = "jsonl"; break;
  }
  corpus_json["path"] = corpus.path;
  json buckets = json::array();
  for (const BucketLengthRange& r : corpus.synthetic.buckets) {
    buckets.push_back(json{{"lo", r.lo}, {"hi", r.hi}, {"weight", r.weight}});
  }
  corpus_json["synthetic"] = json{{"num_docs", corpus.synthetic.num_docs},
                                  {"vocab_size", corpus.synthetic.vocab_size},
                                  {"zipf_s", corpus.synthetic.zipf_s},
                                  {"buckets", std::move(buckets)}};
  j["corpus"] = std::move(corpus_json);

  j["plan"] = json{{"docs_per_level", plan.docs_per_level},
                   {"level_min", plan.level_min},
                   {"level_max", plan.level_max},
                   {"docs_per_bucket_per_level", plan.docs_per_bucket_per_level},
                   {"validation_fraction", plan.validation_fraction}};

  j["model"] = json{{"order", model.order}, {"alpha", model.alpha}, {"lambda", model.lambda}};

  json sweep_json;
  sweep_json["top_p_values"] = sweep.top_p_values;
  sweep_json["include_greedy_baseline"] = sweep.include_greedy_baseline;
  sweep_json["prefix_len"] = sweep.prefix_len;
  sweep_json["bleu_prefix_len"] = sweep.bleu_prefix_len;
  sweep_json["duplicity_bin_width"] = sweep.duplicity_bin_width;
  sweep_json["seeds"] = sweep.seeds;
  sweep_json["include_singletons"] = sweep.include_singletons;
  sweep_json["singleton_sample"] = sweep.singleton_sample;
  sweep_json["max_new_tokens"] = sweep.max_new_tokens;
  sweep_json["temperature"] = sweep.temperature;
  sweep_json["prefix_mode"] = std::string(prefix_mode_label(sweep.prefix_mode));
  sweep_json["bucket_prefix_lens"] = sweep.bucket_prefix_lens;
  sweep_json["detectors"] = json{{"tau_r", sweep.detectors.tau_r},
                                 {"growth_factor", sweep.detectors.growth_factor},
                                 {"tau_s", sweep.detectors.tau_s},
                                 {"epsilon", sweep.detectors.epsilon}};
  j["sweep"] = std::move(sweep_json);

  json formats = json::array();
  if (io.write_jsonl) formats.push_back("jsonl");
  if (io.write_binary) formats.push_back("bin");
  j["io"] = json{{"out_dir", io.out_dir}, {"formats", std::move(formats)}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  require_object(j, "top level");
  reject_unknown_keys(j, {"seed", "num_seeds", "corpus", "plan", "model", "sweep", "io"}, "top level");

  RunConfig cfg;
  cfg.seed = get_field<std::uint64_t>(j, "seed", "top level", cfg.seed);
  cfg.num_seeds = get_field<std::int32_t>(j, "num_seeds", "top level", cfg.num_seeds);
  if (cfg.num_seeds < 1) throw ConfigError("config: num_seeds must be >= 1");

  if (j.contains("corpus")) {
    const json& c = j.at("corpus");
    require_object(c, "corpus");
    reject_unknown_keys(c, {"source", "path", "synthetic"}, "corpus");
    const std::string source = get_field<std::string>(c, "source", "corpus", "synthetic");
    if (source == "synthetic") {
      cfg.corpus.source = CorpusSource::kSynthetic;
    } else if (source == "dir") {
      cfg.corpus.source = CorpusSource::kDir;
    } else if (source == "jsonl") {
      cfg.corpus.source = CorpusSource::kJsonl;
    } else {
      throw ConfigError("config: corpus.source must be one of synthetic|dir|jsonl");
    }
    cfg.corpus.path = get_field<std::string>(c, "path", "corpus", "");
    if (cfg.corpus.source != CorpusSource::kSynthetic && cfg.corpus.path.empty()) {
      throw ConfigError("config: corpus.path is required for corpus.source=" + source);
    }
    if (c.contains("synthetic")) {
      const json& s = c.at("synthetic");
      require_object(s, "corpus.synthetic");
      reject_unknown_keys(s, {"num_docs", "vocab_size", "zipf_s", "buckets"}, "corpus.synthetic");
      cfg.corpus.synthetic.num_docs =
          get_field<std::int32_t>(s, "num_docs", "corpus.synthetic", cfg.corpus.synthetic.num_docs);
      cfg.corpus.synthetic.vocab_size =
          get_field<std::int32_t>(s, "vocab_size", "corpus.synthetic", cfg.corpus.synthetic.vocab_size);
      cfg.corpus.synthetic.zipf_s = get_field<double>(s, "zipf_s", "corpus.synthetic", cfg.corpus.synthetic.zipf_s);
      if (s.contains("buckets")) {
        const json& bl = s.at("buckets");
        if (!bl.is_array() || bl.size() != kNumBuckets) {
          throw ConfigError("config: corpus.synthetic.buckets must be an array of 4 ranges");
        }
        for (std::size_t i = 0; i < bl.size(); ++i) {
          const std::string where = "corpus.synthetic.buckets[" + std::to_string(i) + "]";
          require_object(bl[i], where);
          reject_unknown_keys(bl[i], {"lo", "hi", "weight"}, where);
          BucketLengthRange& r = cfg.corpus.synthetic.buckets[i];
          r.lo = get_field<std::int32_t>(bl[i], "lo", where, r.lo);
          r.hi = get_field<std::int32_t>(bl[i], "hi", where, r.hi);
          r.weight = get_field<double>(bl[i], "weight", where, r.weight);
          if (r.lo < 1 || r.hi < r.lo) throw ConfigError("config: " + where + " has an invalid length range");
          if (r.weight < 0.0) throw ConfigError("config: " + where + ".weight must be >= 0");
        }
      }
    }
  }

  if (j.contains("plan")) {
    const json& p = j.at("plan");
    require_object(p, "plan");
    reject_unknown_keys(
        p, {"docs_per_level", "level_min", "level_max", "docs_per_bucket_per_level", "validation_fraction"}, "plan");
    cfg.plan.docs_per_level = get_field<std::int32_t>(p, "docs_per_level", "plan", cfg.plan.docs_per_level);
    cfg.plan.level_min = get_field<std::int32_t>(p, "level_min", "plan", cfg.plan.level_min);
    cfg.plan.level_max = get_field<std::int32_t>(p, "level_max", "plan", cfg.plan.level_max);
    cfg.plan.docs_per_bucket_per_level =
        get_field<std::int32_t>(p, "docs_per_bucket_per_level", "plan", cfg.plan.docs_per_bucket_per_level);
    cfg.plan.validation_fraction = get_field<double>(p, "validation_fraction", "plan", cfg.plan.validation_fraction);
    cfg.plan.validate();
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    require_object(m, "model");
    reject_unknown_keys(m, {"order", "alpha", "lambda"}, "model");
    cfg.model.order = get_field<std::int32_t>(m, "order", "model", cfg.model.order);
    cfg.model.alpha = get_field<double>(m, "alpha", "model", cfg.model.alpha);
    cfg.model.lambda = get_field<double>(m, "lambda", "model", cfg.model.lambda);
    cfg.model.validate();
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    require_object(s, "sweep");
    reject_unknown_keys(s,
                        {"top_p_values", "include_greedy_baseline", "prefix_len", "bleu_prefix_len",
                         "duplicity_bin_width", "seeds", "include_singletons", "singleton_sample", "max_new_tokens",
                         "temperature", "prefix_mode", "bucket_prefix_lens", "detectors"},
                        "sweep");
    if (s.contains("top_p_values")) {
      try {
        cfg.sweep.top_p_values = s.at("top_p_values").get<std::vector<double>>();
      } catch (const json::exception&) {
        throw ConfigError("config: bad value for sweep.top_p_values");
      }
      for (std::size_t i = 0; i < cfg.sweep.top_p_values.size(); ++i) {
        const double p = cfg.sweep.top_p_values[i];
        if (!(p > 0.0 && p <= 1.0)) {
          throw ConfigError("config: sweep.top_p_values[" + std::to_string(i) + "] must be in (0, 1]");
        }
      }
    }
    cfg.sweep.include_greedy_baseline =
        get_field<bool>(s, "include_greedy_baseline", "sweep", cfg.sweep.include_greedy_baseline);
    cfg.sweep.prefix_len = get_field<std::int32_t>(s, "prefix_len", "sweep", cfg.sweep.prefix_len);
    cfg.sweep.bleu_prefix_len = get_field<std::int32_t>(s, "bleu_prefix_len", "sweep", cfg.sweep.bleu_prefix_len);
    cfg.sweep.duplicity_bin_width =
        get_field<std::int32_t>(s, "duplicity_bin_width", "sweep", cfg.sweep.duplicity_bin_width);
    if (s.contains("seeds")) {
      try {
        cfg.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
      } catch (const json::exception&) {
        throw ConfigError("config: bad value for sweep.seeds");
      }
    }
    cfg.sweep.include_singletons = get_field<bool>(s, "include_singletons", "sweep", cfg.sweep.include_singletons);
    cfg.sweep.singleton_sample = get_field<std::int32_t>(s, "singleton_sample", "sweep", cfg.sweep.singleton_sample);
    cfg.sweep.max_new_tokens = get_field<std::int32_t>(s, "max_new_tokens", "sweep", cfg.sweep.max_new_tokens);
    cfg.sweep.temperature = get_field<double>(s, "temperature", "sweep", cfg.sweep.temperature);
    if (s.contains("prefix_mode")) {
      const std::string mode = s.at("prefix_mode").get<std::string>();
      if (mode == "fixed") {
        cfg.sweep.prefix_mode = PrefixMode::kFixed;
      } else if (mode == "bleu") {
        cfg.sweep.prefix_mode = PrefixMode::kBleu;
      } else if (mode == "buckets") {
        cfg.sweep.prefix_mode = PrefixMode::kBuckets;
      } else {
        throw ConfigError("config: sweep.prefix_mode must be one of fixed|bleu|buckets");
      }
    }
    if (s.contains("bucket_prefix_lens")) {
      std::vector<std::int32_t> lens;
      try {
        lens = s.at("bucket_prefix_lens").get<std::vector<std::int32_t>>();
      } catch (const json::exception&) {
        throw ConfigError("config: bad value for sweep.bucket_prefix_lens");
      }
      if (lens.size() != kNumBuckets) {
        throw ConfigError("config: sweep.bucket_prefix_lens must have 4 entries");
      }
      std::copy(lens.begin(), lens.end(), cfg.sweep.bucket_prefix_lens.begin());
    }
    if (s.contains("detectors")) {
      const json& d = s.at("detectors");
      require_object(d, "sweep.detectors");
      reject_unknown_keys(d, {"tau_r", "growth_factor", "tau_s", "epsilon"}, "sweep.detectors");
      cfg.sweep.detectors.tau_r = get_field<double>(d, "tau_r", "sweep.detectors", cfg.sweep.detectors.tau_r);
      cfg.sweep.detectors.growth_factor =
          get_field<double>(d, "growth_factor", "sweep.detectors", cfg.sweep.detectors.growth_factor);
      cfg.sweep.detectors.tau_s = get_field<double>(d, "tau_s", "sweep.detectors", cfg.sweep.detectors.tau_s);
      cfg.sweep.detectors.epsilon = get_field<double>(d, "epsilon", "sweep.detectors", cfg.sweep.detectors.epsilon);
    }
  }

  if (j.contains("io")) {
    const json& io = j.at("io");
    require_object(io, "io");
    reject_unknown_keys(io, {"out_dir", "formats"}, "io");
    cfg.io.out_dir = get_field<std::string>(io, "out_dir", "io", cfg.io.out_dir);
    if (io.contains("formats")) {
      std::vector<std::string> formats;
      try {
        formats = io.at("formats").get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw ConfigError("config: bad value for io.formats");
      }
      cfg.io.write_jsonl = false;
      cfg.io.write_binary = false;
      for (const std::string& f : formats) {
        if (f == "jsonl") {
          cfg.io.write_jsonl = true;
        } else if (f == "bin") {
          cfg.io.write_binary = true;
        } else {
          throw ConfigError("config: io.formats entries must be jsonl|bin, got \"" + f + "\"");
        }
      }
      if (!cfg.io.write_jsonl && !cfg.io.write_binary) {
        throw ConfigError("config: io.formats must include at least one of jsonl|bin");
      }
    }
  }

  return cfg;
}

std::string RunConfig::canonical_string() const { return to_json().dump(); }

RunConfig parse_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config: malformed JSON in " + path.string() + ": " + e.what());
  }
  return RunConfig::from_json(j);
}

}  // namespace memprobe
