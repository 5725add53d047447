#include "memprobe/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"
#include "memprobe/rng.hpp"

namespace memprobe {

std::string DecodeSetting::label() const {
  if (greedy) return "greedy";
  return "p=" + format_double(top_p);
}

std::string_view prefix_mode_label(PrefixMode m) {
  switch (m) {
    case PrefixMode::kFixed: return "fixed";
    case PrefixMode::kBleu: return "bleu";
    case PrefixMode::kBuckets: return "buckets";
  }
  return "?";
}

std::vector<DecodeSetting> SweepConfig::settings() const {
  std::vector<DecodeSetting> out;
  if (include_greedy_baseline) out.push_back(DecodeSetting{true, 1.0});
  for (double p : top_p_values) out.push_back(DecodeSetting{false, p});
  return out;
}

void SweepConfig::validate() const {
  for (std::size_t i = 0; i < top_p_values.size(); ++i) {
    if (!(top_p_values[i] > 0.0 && top_p_values[i] <= 1.0)) {
      throw ConfigError("sweep.top_p_values[" + std::to_string(i) + "] must be in (0, 1]");
    }
  }
  if (prefix_len < 1) throw ConfigError("sweep.prefix_len must be >= 1");
  if (bleu_prefix_len < 1) throw ConfigError("sweep.bleu_prefix_len must be >= 1");
  if (duplicity_bin_width < 1) throw ConfigError("sweep.duplicity_bin_width must be >= 1");
  if (seeds.empty()) throw ConfigError("sweep.seeds must be nonempty");
  if (max_new_tokens < 1) throw ConfigError("sweep.max_new_tokens must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("sweep.temperature must be > 0");
  for (std::int32_t len : bucket_prefix_lens) {
    if (len < 1) throw ConfigError("sweep.bucket_prefix_lens entries must be >= 1");
  }
  if (settings().empty()) throw ConfigError("sweep: no decode settings (no top_p values and greedy disabled)");
}

namespace {

constexpr std::int32_t kTargetCap = 512;

std::int32_t prefix_len_for(const SweepConfig& cfg, const ManifestEntry& entry, std::int32_t content_length) {
  switch (cfg.prefix_mode) {
    case PrefixMode::kFixed:
      return cfg.prefix_len;
    case PrefixMode::kBleu:
      return std::min(cfg.bleu_prefix_len, content_length / 2);
    case PrefixMode::kBuckets:
      return cfg.bucket_prefix_lens[static_cast<std::size_t>(entry.bucket)];
  }
  return cfg.prefix_len;
}

}  // namespace

ProbeSet make_probes(const CorpusManifest& manifest, const std::vector<Document>& docs, const SweepConfig& config) {
  config.validate();

  std::unordered_map<std::string, std::size_t> doc_index;
  doc_index.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) doc_index.emplace(docs[i].id, i);

  auto try_add = [&](const ManifestEntry& entry, ProbeSet& out) {
    const auto it = doc_index.find(entry.id);
    if (it == doc_index.end()) {
      throw ConfigError("probes: manifest entry " + entry.id + " has no document");
    }
    const Document& doc = docs[it->second];
    const std::int32_t plen = prefix_len_for(config, entry, doc.content_length());
    if (plen < 1 || doc.content_length() < plen + 1) {
      ++out.skipped_short;
      return;
    }
    MemorizationProbe probe;
    probe.doc_id = entry.id;
    probe.duplicity = entry.duplicity;
    probe.bucket = entry.bucket;
    probe.prefix.assign(doc.tokens.begin(), doc.tokens.begin() + plen);
    const auto target_len = std::min<std::size_t>(kTargetCap, doc.tokens.size() - static_cast<std::size_t>(plen));
    probe.target.assign(doc.tokens.begin() + plen, doc.tokens.begin() + plen + static_cast<std::ptrdiff_t>(target_len));
    out.probes.push_back(std::move(probe));
  };

  ProbeSet out;
  std::vector<std::size_t> singleton_entries;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& entry = manifest.entries[i];
    if (entry.split != Split::kTrain) continue;
    if (entry.duplicity >= 2) {
      try_add(entry, out);
    } else if (config.include_singletons) {
      singleton_entries.push_back(i);
    }
  }

  if (config.include_singletons && !singleton_entries.empty()) {
    std::size_t want = config.singleton_sample < 0
                           ? singleton_entries.size()
                           : static_cast<std::size_t>(config.singleton_sample == 0 ? manifest.plan.docs_per_level
                                                                                   : config.singleton_sample);
    want = std::min(want, singleton_entries.size());
    SplitMix64 rng(mix_seed(manifest.seed, "singleton-sample"));
    shuffle(singleton_entries, rng);
    singleton_entries.resize(want);
    std::sort(singleton_entries.begin(), singleton_entries.end());
    for (std::size_t i : singleton_entries) {
      try_add(manifest.entries[i], out);
    }
  }

  if (out.probes.empty()) {
    throw ConfigError("probes: empty probe set (every candidate document is shorter than its prefix length)");
  }
  return out;
}

std::vector<SweepRecord> run_sweep(const LanguageModel& model, std::span<const MemorizationProbe> probes,
                                   const SweepConfig& config, int jobs) {
  config.validate();
  if (probes.empty()) throw ConfigError("sweep: no probes");

  TokenId max_token = 0;
  for (const MemorizationProbe& p : probes) {
    for (TokenId t : p.prefix) max_token = std::max(max_token, t);
    for (TokenId t : p.target) max_token = std::max(max_token, t);
  }
  if (max_token >= model.vocab_size()) {
    throw ConfigError("sweep: vocabulary mismatch: probe token id " + std::to_string(max_token) +
                      " outside model vocabulary of size " + std::to_string(model.vocab_size()));
  }

  const std::vector<DecodeSetting> settings = config.settings();
  const std::size_t num_tasks = probes.size() * settings.size() * config.seeds.size();
  std::vector<SweepRecord> records(num_tasks);

  auto run_task = [&](std::size_t task) {
    const std::size_t seed_idx = task % config.seeds.size();
    const std::size_t setting_idx = (task / config.seeds.size()) % settings.size();
    const std::size_t probe_idx = task / (config.seeds.size() * settings.size());

    const MemorizationProbe& probe = probes[probe_idx];
    const DecodeSetting& setting = settings[setting_idx];

    DecodeConfig dc;
    dc.strategy = setting.greedy ? Strategy::kGreedy : Strategy::kNucleus;
    dc.top_p = setting.top_p;
    dc.temperature = config.temperature;
    dc.max_new_tokens = config.max_new_tokens;
    dc.seed = config.seeds[seed_idx];

    const std::string stream_tag = probe.doc_id + "|" + setting.label();
    const DecodeTrace trace = generate(model, probe.prefix, dc, stream_tag);

    SweepRecord rec;
    rec.probe_id = probe.doc_id;
    rec.duplicity = probe.duplicity;
    rec.bucket = probe.bucket;
    rec.prefix_len = static_cast<std::int32_t>(probe.prefix.size());
    rec.setting = setting;
    rec.seed = dc.seed;
    rec.verbatim = verbatim_memorized(trace.generated, probe.target);
    rec.bleu4 = soft_memorization_score(trace.generated, probe.target);
    rec.gen_len = static_cast<std::int32_t>(trace.generated.size());
    rec.stop_reason = trace.stop_reason;
    rec.gen_steps = static_cast<std::int32_t>(trace.steps.size());
    rec.det_steps = 0;
    for (const StepRecord& s : trace.steps) {
      if (s.deterministic) ++rec.det_steps;
    }
    records[task] = std::move(rec);
  };

  if (jobs == 1) {
    for (std::size_t task = 0; task < num_tasks; ++task) run_task(task);
  } else {
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
    const int threads = jobs <= 0 ? max_threads : std::min(jobs, max_threads);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (std::int64_t task = 0; task < static_cast<std::int64_t>(num_tasks); ++task) {
      run_task(static_cast<std::size_t>(task));
    }
#else
    for (std::size_t task = 0; task < num_tasks; ++task) run_task(task);
#endif
  }
  return records;
}

std::string duplicity_bin_label(std::int32_t duplicity, std::int32_t bin_width) {
  if (duplicity <= 1) return "1";
  const std::int32_t k = (duplicity - 1) / bin_width;
  const std::int32_t lo = std::max(2, k * bin_width + 1);
  const std::int32_t hi = (k + 1) * bin_width;
  if (lo >= hi) return std::to_string(hi);
  return std::to_string(lo) + "-" + std::to_string(hi);
}

namespace {

// Smallest duplicity >= 2 inside the bin; doubles as the row sort key and
// maps back to the same label via duplicity_bin_label.
std::int32_t bin_sort_key(std::int32_t duplicity, std::int32_t bin_width) {
  if (duplicity <= 1) return 1;
  return std::max(2, ((duplicity - 1) / bin_width) * bin_width + 1);
}

/// Column order: greedy first, then nucleus settings by ascending top_p.
std::vector<DecodeSetting> ordered_settings(std::span<const SweepRecord> records) {
  std::set<std::pair<int, double>> keys;
  for (const SweepRecord& r : records) {
    keys.emplace(r.setting.greedy ? 0 : 1, r.setting.greedy ? 0.0 : r.setting.top_p);
  }
  std::vector<DecodeSetting> out;
  for (const auto& [kind, p] : keys) {
    out.push_back(kind == 0 ? DecodeSetting{true, 1.0} : DecodeSetting{false, p});
  }
  return out;
}

std::vector<const SweepRecord*> dedup_records(std::span<const SweepRecord> records) {
  std::unordered_set<std::string> seen;
  std::vector<const SweepRecord*> out;
  out.reserve(records.size());
  for (const SweepRecord& r : records) {
    std::string key = r.probe_id + "|" + r.setting.label() + "|" + std::to_string(r.seed);
    if (seen.insert(std::move(key)).second) out.push_back(&r);
  }
  return out;
}

}  // namespace

HeatmapResult aggregate_heatmap(std::span<const SweepRecord> records, std::int32_t bin_width) {
  if (records.empty()) throw ConfigError("aggregate: no records");
  const std::vector<const SweepRecord*> recs = dedup_records(records);

  std::map<std::int32_t, std::string> bins;  // sort key -> label
  std::set<std::uint64_t> seed_set;
  for (const SweepRecord* r : recs) {
    bins.emplace(bin_sort_key(r->duplicity, bin_width), duplicity_bin_label(r->duplicity, bin_width));
    seed_set.insert(r->seed);
  }
  const std::vector<DecodeSetting> cols = ordered_settings(records);

  HeatmapResult result;
  for (const auto& [key, label] : bins) result.row_labels.push_back(label);
  for (const DecodeSetting& s : cols) result.col_labels.push_back(s.label());
  result.seeds.assign(seed_set.begin(), seed_set.end());

  std::map<std::int32_t, std::size_t> row_of;
  std::size_t idx = 0;
  for (const auto& [key, label] : bins) row_of.emplace(key, idx++);
  std::map<std::string, std::size_t> col_of;
  for (std::size_t c = 0; c < cols.size(); ++c) col_of.emplace(cols[c].label(), c);
  std::map<std::uint64_t, std::size_t> seed_of;
  for (std::size_t s = 0; s < result.seeds.size(); ++s) seed_of.emplace(result.seeds[s], s);

  const std::size_t rows = result.row_labels.size();
  const std::size_t ncols = result.col_labels.size();
  const std::size_t nseeds = result.seeds.size();

  std::vector counts(nseeds, std::vector(rows, std::vector<std::int64_t>(ncols, 0)));
  std::vector memorized(nseeds, std::vector(rows, std::vector<std::int64_t>(ncols, 0)));
  for (const SweepRecord* r : recs) {
    const std::size_t si = seed_of.at(r->seed);
    const std::size_t ri = row_of.at(bin_sort_key(r->duplicity, bin_width));
    const std::size_t ci = col_of.at(r->setting.label());
    ++counts[si][ri][ci];
    if (r->verbatim) ++memorized[si][ri][ci];
  }

  result.per_seed.assign(nseeds, std::vector(rows, std::vector<double>(ncols, std::nan(""))));
  result.mean.assign(rows, std::vector<double>(ncols, std::nan("")));
  result.stddev.assign(rows, std::vector<double>(ncols, std::nan("")));
  result.n.assign(rows, std::vector<std::int64_t>(ncols, 0));

  for (std::size_t ri = 0; ri < rows; ++ri) {
    for (std::size_t ci = 0; ci < ncols; ++ci) {
      double sum = 0.0;
      double sum_sq = 0.0;
      std::size_t present = 0;
      for (std::size_t si = 0; si < nseeds; ++si) {
        if (counts[si][ri][ci] == 0) continue;
        const double frac = static_cast<double>(memorized[si][ri][ci]) / static_cast<double>(counts[si][ri][ci]);
        result.per_seed[si][ri][ci] = frac;
        result.n[ri][ci] = std::max(result.n[ri][ci], counts[si][ri][ci]);
        sum += frac;
        sum_sq += frac * frac;
        ++present;
      }
      if (present > 0) {
        const double mean = sum / static_cast<double>(present);
        result.mean[ri][ci] = mean;
        result.stddev[ri][ci] = std::sqrt(std::max(0.0, sum_sq / static_cast<double>(present) - mean * mean));
      }
    }
  }
  return result;
}

std::vector<ContextBucketCell> aggregate_context_buckets(std::span<const SweepRecord> records) {
  const std::vector<const SweepRecord*> recs = dedup_records(records);
  const std::vector<DecodeSetting> cols = ordered_settings(records);

  std::map<std::pair<std::string, int>, std::pair<std::int64_t, std::int64_t>> cells;  // (setting,bucket) -> (mem, n)
  for (const SweepRecord* r : recs) {
    auto& cell = cells[{r->setting.label(), static_cast<int>(r->bucket)}];
    ++cell.second;
    if (r->verbatim) ++cell.first;
  }

  std::vector<ContextBucketCell> out;
  for (const DecodeSetting& s : cols) {
    for (int b = 0; b < kNumBuckets; ++b) {
      const auto it = cells.find({s.label(), b});
      if (it == cells.end()) continue;  // empty bucket: absent, not zero
      ContextBucketCell cell;
      cell.setting = s.label();
      cell.bucket = static_cast<LengthBucket>(b);
      cell.fraction = static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
      cell.n = it->second.second;
      out.push_back(std::move(cell));
    }
  }
  return out;
}

std::vector<std::pair<std::int32_t, double>> duplicity_series(std::span<const SweepRecord> records,
                                                              const DecodeSetting& setting) {
  const std::vector<const SweepRecord*> recs = dedup_records(records);
  // level -> seed -> (memorized, count)
  std::map<std::int32_t, std::map<std::uint64_t, std::pair<std::int64_t, std::int64_t>>> levels;
  for (const SweepRecord* r : recs) {
    if (r->setting.label() != setting.label()) continue;
    auto& cell = levels[r->duplicity][r->seed];
    ++cell.second;
    if (r->verbatim) ++cell.first;
  }
  std::vector<std::pair<std::int32_t, double>> series;
  for (const auto& [level, by_seed] : levels) {
    double sum = 0.0;
    for (const auto& [seed, mc] : by_seed) {
      sum += static_cast<double>(mc.first) / static_cast<double>(mc.second);
    }
    series.emplace_back(level, sum / static_cast<double>(by_seed.size()));
  }
  return series;
}

std::optional<std::int32_t> detect_rampup(std::span<const std::pair<std::int32_t, double>> series, double tau_r,
                                          double growth_factor) {
  for (std::size_t i = 1; i < series.size(); ++i) {
    const double value = series[i].second;
    if (value >= tau_r && value >= growth_factor * series[i - 1].second) {
      return series[i].first;
    }
  }
  return std::nullopt;
}

std::optional<std::int32_t> detect_saturation(std::span<const std::pair<std::int32_t, double>> series, double tau_s,
                                              double epsilon) {
  std::vector<double> suffix_max(series.size(), 0.0);
  double running = -1.0;
  for (std::size_t i = series.size(); i-- > 0;) {
    suffix_max[i] = running;  // max over strictly later levels; -1 when none
    running = std::max(running, series[i].second);
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].second >= tau_s) return series[i].first;
    if (i + 1 < series.size() && suffix_max[i] - series[i].second < epsilon) return series[i].first;
  }
  return std::nullopt;
}

std::map<std::string, double> deterministic_fraction(std::span<const DecodeTrace> traces,
                                                     std::span<const std::string> group_keys) {
  if (traces.size() != group_keys.size()) {
    throw ConfigError("deterministic_fraction: traces and group keys differ in length");
  }
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> acc;  // det, total
  for (std::size_t i = 0; i < traces.size(); ++i) {
    auto& cell = acc[group_keys[i]];
    for (const StepRecord& s : traces[i].steps) {
      ++cell.second;
      if (s.deterministic) ++cell.first;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [key, dt] : acc) {
    out[key] = dt.second == 0 ? 0.0 : static_cast<double>(dt.first) / static_cast<double>(dt.second);
  }
  return out;
}

std::vector<DetFracCell> deterministic_fraction_by_duplicity(std::span<const SweepRecord> records) {
  const std::vector<const SweepRecord*> recs = dedup_records(records);
  std::map<std::pair<std::string, std::int32_t>, std::pair<std::int64_t, std::int64_t>> acc;
  std::map<std::string, double> setting_order;
  for (const SweepRecord* r : recs) {
    if (r->setting.greedy) continue;  // singleton-nucleus analysis concerns nucleus runs
    auto& cell = acc[{r->setting.label(), r->duplicity}];
    cell.first += r->det_steps;
    cell.second += r->gen_steps;
    setting_order[r->setting.label()] = r->setting.top_p;
  }
  std::vector<std::string> settings;
  for (const auto& [label, p] : setting_order) settings.push_back(label);
  std::sort(settings.begin(), settings.end(),
            [&](const std::string& a, const std::string& b) { return setting_order[a] < setting_order[b]; });

  std::vector<DetFracCell> out;
  for (const std::string& label : settings) {
    for (const auto& [key, dt] : acc) {
      if (key.first != label) continue;
      DetFracCell cell;
      cell.setting = label;
      cell.duplicity = key.second;
      cell.steps = dt.second;
      cell.fraction = dt.second == 0 ? 0.0 : static_cast<double>(dt.first) / static_cast<double>(dt.second);
      out.push_back(std::move(cell));
    }
  }
  return out;
}

std::vector<BleuCell> bleu_by_bin(std::span<const SweepRecord> records, std::int32_t bin_width) {
  const std::vector<const SweepRecord*> recs = dedup_records(records);
  const std::vector<DecodeSetting> cols = ordered_settings(records);

  struct Acc {
    std::vector<double> excl;
    std::vector<double> all;
  };
  std::map<std::pair<std::string, std::int32_t>, Acc> acc;  // (setting, bin key)
  for (const SweepRecord* r : recs) {
    auto& a = acc[{r->setting.label(), bin_sort_key(r->duplicity, bin_width)}];
    a.all.push_back(r->bleu4);
    if (!r->verbatim) a.excl.push_back(r->bleu4);
  }

  // Sort values before summing so the mean does not depend on record order.
  auto stable_mean = [](std::vector<double>& v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };

  std::vector<BleuCell> out;
  for (const DecodeSetting& s : cols) {
    for (auto& [key, a] : acc) {
      if (key.first != s.label()) continue;
      BleuCell cell;
      cell.setting = key.first;
      cell.bin = duplicity_bin_label(key.second, bin_width);
      cell.n_all = static_cast<std::int64_t>(a.all.size());
      cell.n_excl_verbatim = static_cast<std::int64_t>(a.excl.size());
      cell.mean_all = stable_mean(a.all);
      cell.mean_excl_verbatim = stable_mean(a.excl);
      out.push_back(std::move(cell));
    }
  }
  return out;
}

}  // namespace memprobe
