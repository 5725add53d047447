#include "memprobe/reports.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"
#include "memprobe/rng.hpp"

namespace memprobe {

using nlohmann::json;

std::string config_hash_hex(const std::string& canonical_config_json) {
  const std::uint64_t h = fnv1a64(canonical_config_json);
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

namespace {

json provenance_json(const Provenance& prov) {
  return json{{"schema_version", prov.schema_version}, {"config_hash", prov.config_hash}, {"seed", prov.seed}};
}

std::string provenance_comment(const Provenance& prov) {
  return "# schema_version=" + std::to_string(prov.schema_version) + " config_hash=" + prov.config_hash +
         " seed=" + std::to_string(prov.seed) + "\n";
}

json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

std::string record_to_json_line(const SweepRecord& record) {
  json j;
  j["probe_id"] = record.probe_id;
  j["duplicity"] = record.duplicity;
  j["bucket"] = std::string(bucket_label(record.bucket));
  j["prefix_len"] = record.prefix_len;
  j["decode"] = record.setting.greedy ? "greedy" : "nucleus";
  if (!record.setting.greedy) j["top_p"] = record.setting.top_p;
  j["seed"] = record.seed;
  j["verbatim"] = record.verbatim;
  j["bleu4"] = record.bleu4;
  j["gen_len"] = record.gen_len;
  j["stop_reason"] = std::string(stop_reason_label(record.stop_reason));
  j["det_steps"] = record.det_steps;
  j["gen_steps"] = record.gen_steps;
  return j.dump();
}

SweepRecord record_from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw RuntimeFailure(std::string("records: malformed JSONL line: ") + e.what());
  }
  try {
    SweepRecord r;
    r.probe_id = j.at("probe_id").get<std::string>();
    r.duplicity = j.at("duplicity").get<std::int32_t>();
    const auto bucket = bucket_from_label(j.at("bucket").get<std::string>());
    if (!bucket) throw RuntimeFailure("records: unknown bucket label");
    r.bucket = *bucket;
    r.prefix_len = j.at("prefix_len").get<std::int32_t>();
    const std::string decode = j.at("decode").get<std::string>();
    if (decode == "greedy") {
      r.setting = DecodeSetting{true, 1.0};
    } else if (decode == "nucleus") {
      r.setting = DecodeSetting{false, j.at("top_p").get<double>()};
    } else {
      throw RuntimeFailure("records: unknown decode kind " + decode);
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.verbatim = j.at("verbatim").get<bool>();
    r.bleu4 = j.at("bleu4").get<double>();
    r.gen_len = j.at("gen_len").get<std::int32_t>();
    r.stop_reason = j.at("stop_reason").get<std::string>() == "eos" ? StopReason::kEos : StopReason::kCap;
    r.det_steps = j.at("det_steps").get<std::int32_t>();
    r.gen_steps = j.at("gen_steps").get<std::int32_t>();
    return r;
  } catch (const json::exception& e) {
    throw RuntimeFailure(std::string("records: bad record: ") + e.what());
  }
}

void write_records_jsonl(const std::filesystem::path& path, std::span<const SweepRecord> records,
                         const Provenance& prov) {
  std::string body;
  for (const SweepRecord& r : records) {
    body += record_to_json_line(r);
    body += "\n";
  }
  atomic_write_text(path, body);
  json meta = provenance_json(prov);
  meta["records"] = records.size();
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  atomic_write_text(meta_path, meta.dump(2) + "\n");
}

std::vector<SweepRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::vector<SweepRecord> records;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    records.push_back(record_from_json_line(line));
  }
  return records;
}

void write_traces_jsonl(const std::filesystem::path& path,
                        std::span<const std::pair<std::string, DecodeTrace>> traces, const DecodeConfig& config,
                        const Provenance& prov) {
  json config_json;
  config_json["strategy"] = std::string(strategy_label(config.strategy));
  if (config.strategy == Strategy::kNucleus) config_json["top_p"] = config.top_p;
  config_json["temperature"] = config.temperature;
  config_json["max_new_tokens"] = config.max_new_tokens;
  config_json["seed"] = config.seed;

  std::string body;
  for (const auto& [probe_id, trace] : traces) {
    json j;
    j["probe_id"] = probe_id;
    j["config"] = config_json;
    j["stop_reason"] = std::string(stop_reason_label(trace.stop_reason));
    j["generated"] = trace.generated;
    j["prefix_probs"] = trace.prefix_probs;
    json steps = json::array();
    for (const StepRecord& s : trace.steps) {
      steps.push_back(json{{"i", s.step_index},
                           {"tok", s.chosen_token},
                           {"p", s.chosen_prob},
                           {"pmax", s.raw_max_prob},
                           {"nsz", s.nucleus_size},
                           {"det", s.deterministic},
                           {"mass", s.cumulative_mass}});
    }
    j["steps"] = std::move(steps);
    body += j.dump();
    body += "\n";
  }
  atomic_write_text(path, body);
  std::filesystem::path meta_path = path;
  meta_path += ".meta.json";
  atomic_write_text(meta_path, provenance_json(prov).dump(2) + "\n");
}

void write_aggregate_csv(const std::filesystem::path& path, const HeatmapResult& heatmap, const Provenance& prov) {
  std::string body = provenance_comment(prov);
  body += "bin";
  for (const std::string& col : heatmap.col_labels) {
    body += "," + col + "," + col + "_n," + col + "_std";
  }
  body += "\n";
  for (std::size_t r = 0; r < heatmap.row_labels.size(); ++r) {
    body += heatmap.row_labels[r];
    for (std::size_t c = 0; c < heatmap.col_labels.size(); ++c) {
      const double mean = heatmap.mean[r][c];
      if (std::isnan(mean)) {
        body += ",,0,";  // cell absent for this bin/setting
      } else {
        body += "," + format_double(mean);
        body += "," + std::to_string(heatmap.n[r][c]);
        body += "," + format_double(heatmap.stddev[r][c]);
      }
    }
    body += "\n";
  }
  atomic_write_text(path, body);
}

void write_heatmap_json(const std::filesystem::path& path, const HeatmapResult& heatmap, const Provenance& prov) {
  json j = provenance_json(prov);
  j["rows"] = heatmap.row_labels;
  j["cols"] = heatmap.col_labels;
  j["seeds"] = heatmap.seeds;
  json cells = json::array();
  json stddev = json::array();
  json n = json::array();
  for (std::size_t r = 0; r < heatmap.row_labels.size(); ++r) {
    json row = json::array();
    json row_std = json::array();
    for (std::size_t c = 0; c < heatmap.col_labels.size(); ++c) {
      row.push_back(number_or_null(heatmap.mean[r][c]));
      row_std.push_back(number_or_null(heatmap.stddev[r][c]));
    }
    cells.push_back(std::move(row));
    stddev.push_back(std::move(row_std));
    n.push_back(heatmap.n[r]);
  }
  j["cells"] = std::move(cells);
  j["stddev"] = std::move(stddev);
  j["n"] = std::move(n);
  json per_seed = json::array();
  for (std::size_t s = 0; s < heatmap.per_seed.size(); ++s) {
    json m = json::array();
    for (const auto& row : heatmap.per_seed[s]) {
      json jr = json::array();
      for (double v : row) jr.push_back(number_or_null(v));
      m.push_back(std::move(jr));
    }
    per_seed.push_back(std::move(m));
  }
  j["per_seed"] = std::move(per_seed);
  atomic_write_text(path, j.dump(2) + "\n");
}

void write_rampsat_json(const std::filesystem::path& path, std::span<const RampSatEntry> entries,
                        const DetectorThresholds& thresholds, const Provenance& prov) {
  json j = provenance_json(prov);
  j["thresholds"] = json{{"tau_r", thresholds.tau_r},
                         {"growth_factor", thresholds.growth_factor},
                         {"tau_s", thresholds.tau_s},
                         {"epsilon", thresholds.epsilon}};
  json settings = json::array();
  for (const RampSatEntry& e : entries) {
    json ej;
    ej["setting"] = e.setting;
    ej["ramp_up"] = e.ramp_up ? json(*e.ramp_up) : json(nullptr);
    ej["saturation"] = e.saturation ? json(*e.saturation) : json(nullptr);
    json series = json::array();
    for (const auto& [level, frac] : e.series) {
      series.push_back(json::array({level, frac}));
    }
    ej["series"] = std::move(series);
    settings.push_back(std::move(ej));
  }
  j["settings"] = std::move(settings);
  atomic_write_text(path, j.dump(2) + "\n");
}

void write_detfrac_json(const std::filesystem::path& path, std::span<const DetFracCell> cells,
                        const Provenance& prov) {
  json j = provenance_json(prov);
  json rows = json::array();
  for (const DetFracCell& c : cells) {
    rows.push_back(json{{"setting", c.setting},
                        {"duplicity", c.duplicity},
                        {"deterministic_fraction", c.fraction},
                        {"steps", c.steps}});
  }
  j["groups"] = std::move(rows);
  atomic_write_text(path, j.dump(2) + "\n");
}

void write_bleu_table_csv(const std::filesystem::path& path, std::span<const BleuCell> cells, const Provenance& prov) {
  std::string body = provenance_comment(prov);
  body += "setting,bin,bleu4_nonverbatim,n_nonverbatim,bleu4_all,n_all\n";
  for (const BleuCell& c : cells) {
    body += c.setting + "," + c.bin + ",";
    body += std::isnan(c.mean_excl_verbatim) ? "" : format_double(c.mean_excl_verbatim);
    body += "," + std::to_string(c.n_excl_verbatim) + ",";
    body += std::isnan(c.mean_all) ? "" : format_double(c.mean_all);
    body += "," + std::to_string(c.n_all) + "\n";
  }
  atomic_write_text(path, body);
}

void write_context_buckets_json(const std::filesystem::path& path, std::span<const ContextBucketCell> cells,
                                std::string_view prefix_mode, const Provenance& prov) {
  json j = provenance_json(prov);
  j["prefix_mode"] = std::string(prefix_mode);
  json rows = json::array();
  for (const ContextBucketCell& c : cells) {
    rows.push_back(json{{"setting", c.setting},
                        {"bucket", std::string(bucket_label(c.bucket))},
                        {"fraction", c.fraction},
                        {"n", c.n}});
  }
  j["buckets"] = std::move(rows);
  atomic_write_text(path, j.dump(2) + "\n");
}

}  // namespace memprobe
