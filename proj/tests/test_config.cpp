#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "memprobe/config.hpp"
#include "memprobe/error.hpp"
#include "memprobe/ioutil.hpp"

using namespace memprobe;
using nlohmann::json;

TEST_CASE("a minimal config fills every default") {
  const RunConfig cfg = RunConfig::from_json(json::parse(R"({"seed": 1})"));
  CHECK(cfg.seed == 1);
  CHECK(cfg.plan.docs_per_level == 280);
  CHECK(cfg.plan.level_min == 2);
  CHECK(cfg.plan.level_max == 30);
  CHECK(cfg.plan.docs_per_bucket_per_level == 70);
  CHECK(cfg.model.order == 4);
  CHECK(cfg.model.alpha == 0.01);
  CHECK(cfg.model.lambda == 0.1);
  CHECK(cfg.sweep.top_p_values == std::vector<double>{0.2, 0.4, 0.6, 0.8});
  CHECK(cfg.sweep.prefix_len == 150);
  CHECK(cfg.sweep.bleu_prefix_len == 250);
  CHECK(cfg.sweep.duplicity_bin_width == 5);
  CHECK(cfg.sweep.include_greedy_baseline);
  CHECK_FALSE(cfg.sweep.include_singletons);
  CHECK(cfg.sweep.max_new_tokens == 512);
  CHECK(cfg.io.out_dir == "out");
}

TEST_CASE("derive_seeds fills the sweep seed list from the top-level seed") {
  RunConfig cfg = RunConfig::from_json(json::parse(R"({"seed": 9, "num_seeds": 3})"));
  cfg.derive_seeds();
  CHECK(cfg.sweep.seeds.size() == 3);
  CHECK(cfg.plan.seed == 9);
  CHECK(cfg.corpus.synthetic.seed == 9);

  RunConfig again = RunConfig::from_json(json::parse(R"({"seed": 9, "num_seeds": 3})"));
  again.derive_seeds();
  CHECK(again.sweep.seeds == cfg.sweep.seeds);

  // explicit seeds win over derivation
  RunConfig explicit_seeds = RunConfig::from_json(json::parse(R"({"seed": 9, "sweep": {"seeds": [5, 6]}})"));
  explicit_seeds.derive_seeds();
  CHECK(explicit_seeds.sweep.seeds == std::vector<std::uint64_t>{5, 6});
}

TEST_CASE("out-of-range top_p names the exact field") {
  try {
    RunConfig::from_json(json::parse(R"({"sweep": {"top_p_values": [0.2, 1.5]}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("sweep.top_p_values[1]") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected, not ignored") {
  try {
    RunConfig::from_json(json::parse(R"({"topk": 3})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("topk") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"sweep": {"topk": 3}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"model": {"oder": 3}})")), ConfigError);
}

TEST_CASE("invalid section values are rejected with their path") {
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"model": {"alpha": 0}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"model": {"lambda": 1.0}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"plan": {"level_min": 1}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"plan": {"docs_per_level": 7}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"io": {"formats": ["parquet"]}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"corpus": {"source": "dir"}})")), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json::parse(R"({"sweep": {"prefix_mode": "fancy"}})")), ConfigError);
}

TEST_CASE("config round-trips through serialization unchanged") {
  const json input = json::parse(R"({
    "seed": 17,
    "num_seeds": 2,
    "corpus": {"source": "synthetic", "synthetic": {"num_docs": 500, "vocab_size": 120, "zipf_s": 0.5}},
    "plan": {"docs_per_level": 8, "docs_per_bucket_per_level": 2, "level_min": 2, "level_max": 5,
             "validation_fraction": 0.0},
    "model": {"order": 3, "alpha": 0.02, "lambda": 0.2},
    "sweep": {"top_p_values": [0.3], "prefix_len": 12, "seeds": [4], "include_singletons": true,
              "singleton_sample": 3, "max_new_tokens": 64,
              "detectors": {"tau_r": 0.2, "growth_factor": 3.0, "tau_s": 0.8, "epsilon": 0.05}},
    "io": {"out_dir": "elsewhere", "formats": ["jsonl"]}
  })");
  const RunConfig cfg = RunConfig::from_json(input);
  const RunConfig reparsed = RunConfig::from_json(cfg.to_json());
  CHECK(reparsed.to_json() == cfg.to_json());
  CHECK(cfg.sweep.detectors.growth_factor == 3.0);
  CHECK(cfg.io.out_dir == "elsewhere");
  CHECK_FALSE(cfg.io.write_binary);
}

TEST_CASE("parse_config reads a file and reports missing ones") {
  const auto path = std::filesystem::temp_directory_path() / "memprobe_test_config.json";
  atomic_write_text(path, R"({"seed": 3})");
  const RunConfig cfg = parse_config(path);
  CHECK(cfg.seed == 3);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), MissingInputError);

  atomic_write_text(path, "{ not json");
  CHECK_THROWS_AS(parse_config(path), ConfigError);
  std::filesystem::remove(path);
}
