// memprobe: build duplicate-controlled corpora, train an n-gram model,
// decode with greedy/nucleus sampling, and measure verbatim and soft
// memorization.
//
// Subcommands mirror the pipeline stages:
//   gen-synthetic -> corpus.jsonl
//   build         -> vocab.json, manifest.json, corpus.train.{jsonl,bin}, corpus.valid.jsonl
//   train         -> model.json
//   probe         -> records.jsonl + traces.jsonl for one document (debugging aid)
//   sweep         -> records.jsonl, aggregate.csv, heatmap.json
//   analyze       -> rampsat.json, detfrac.json, bleu_table.csv, context_buckets.json
//
// Exit codes: 0 success, 2 config error, 3 missing input, 4 runtime failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "memprobe/config.hpp"
#include "memprobe/error.hpp"
#include "memprobe/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<double> top_p;
  std::optional<int> prefix_len;
  std::optional<int> order;
  std::optional<std::string> out_dir;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file")->required();
  cmd->add_option("--seed", flags.seed, "override the top-level seed");
  cmd->add_option("--top-p", flags.top_p, "override sweep.top_p_values (repeatable)");
  cmd->add_option("--prefix-len", flags.prefix_len, "override sweep.prefix_len");
  cmd->add_option("--order", flags.order, "override model.order");
  cmd->add_option("--out-dir", flags.out_dir, "override io.out_dir");
  cmd->add_option("--jobs", flags.jobs, "worker threads (0 = all, 1 = serial reference)");
}

memprobe::RunConfig load_config(const CommonFlags& flags) {
  memprobe::RunConfig cfg = memprobe::parse_config(flags.config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.top_p.empty()) {
    for (std::size_t i = 0; i < flags.top_p.size(); ++i) {
      if (!(flags.top_p[i] > 0.0 && flags.top_p[i] <= 1.0)) {
        throw memprobe::ConfigError("--top-p value " + std::to_string(flags.top_p[i]) + " must be in (0, 1]");
      }
    }
    cfg.sweep.top_p_values = flags.top_p;
  }
  if (flags.prefix_len) cfg.sweep.prefix_len = *flags.prefix_len;
  if (flags.order) cfg.model.order = *flags.order;
  if (flags.out_dir) cfg.io.out_dir = *flags.out_dir;
  cfg.model.validate();
  cfg.derive_seeds();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memorization measurement toolkit"};
  app.require_subcommand(1);

  CommonFlags gen_flags, build_flags, train_flags, probe_flags, sweep_flags, analyze_flags;

  CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a deduplicated synthetic base corpus");
  add_common(gen, gen_flags);

  CLI::App* build = app.add_subcommand("build", "plan duplication and materialize the training corpus");
  add_common(build, build_flags);

  CLI::App* train = app.add_subcommand("train", "count n-grams over the materialized corpus");
  add_common(train, train_flags);

  CLI::App* probe = app.add_subcommand("probe", "decode one document with full trace instrumentation");
  add_common(probe, probe_flags);
  std::string probe_doc_id;
  std::string probe_strategy = "greedy";
  double probe_top_p = 0.8;
  double probe_temperature = 1.0;
  int probe_max_new = 512;
  std::uint64_t probe_seed = 0;
  probe->add_option("--doc-id", probe_doc_id, "document to probe")->required();
  probe->add_option("--strategy", probe_strategy, "greedy|nucleus")->check(CLI::IsMember({"greedy", "nucleus"}));
  probe->add_option("--probe-top-p", probe_top_p, "nucleus threshold for the probe");
  probe->add_option("--temperature", probe_temperature, "softmax temperature");
  probe->add_option("--max-new-tokens", probe_max_new, "generation cap");
  probe->add_option("--decode-seed", probe_seed, "decode rng seed");

  CLI::App* sweep = app.add_subcommand("sweep", "run the probe grid and aggregate");
  add_common(sweep, sweep_flags);

  CLI::App* analyze = app.add_subcommand("analyze", "ramp-up/saturation, deterministic steps, BLEU table");
  add_common(analyze, analyze_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      memprobe::cmd_gen_synthetic(load_config(gen_flags));
    } else if (build->parsed()) {
      memprobe::cmd_build(load_config(build_flags));
    } else if (train->parsed()) {
      memprobe::cmd_train(load_config(train_flags), train_flags.jobs);
    } else if (probe->parsed()) {
      memprobe::DecodeConfig dc;
      dc.strategy = probe_strategy == "greedy" ? memprobe::Strategy::kGreedy : memprobe::Strategy::kNucleus;
      dc.top_p = probe_top_p;
      dc.temperature = probe_temperature;
      dc.max_new_tokens = probe_max_new;
      dc.seed = probe_seed;
      dc.validate();
      memprobe::cmd_probe(load_config(probe_flags), probe_doc_id, dc);
    } else if (sweep->parsed()) {
      memprobe::cmd_sweep(load_config(sweep_flags), sweep_flags.jobs);
    } else if (analyze->parsed()) {
      memprobe::cmd_analyze(load_config(analyze_flags));
    }
  } catch (const memprobe::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const memprobe::MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
