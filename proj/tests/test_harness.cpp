#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <filesystem>
#include <fstream>

#include "divsim/experiment.hpp"
#include "divsim/rng.hpp"

using namespace divsim;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.world.n_identities = 8;
  cfg.world.images_per_identity = 4;
  cfg.world.n_extractors = 3;
  cfg.world.aux_pool_size = 20;
  cfg.world.dims = 8;
  cfg.protection.steps = 10;
  cfg.protection.substitute_extractors = {1, 2};
  cfg.n_trackees = 2;
  cfg.master_seed = 11;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
  ExperimentConfig cfg = parse_experiment_config("{}");
  CHECK(cfg.world.n_identities == 500);
  CHECK(cfg.protection.alpha1 == 0.6);
  CHECK(cfg.protection.alpha2 == 1.2);
  CHECK(cfg.protection.alpha3 == 0.5);
  CHECK(cfg.protection.alpha4 == 0.02);
  CHECK(cfg.protection.delta == 0.2);
  CHECK(cfg.protection.queue_capacity == 10);
  CHECK(cfg.protection.step_size == 0.01);
  CHECK(cfg.protection.steps == 60);
  CHECK(cfg.n_trackees == 5);

  CHECK_THROWS_AS(parse_experiment_config(R"({"wrld": {}})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"protection": {"alpha9": 1}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"protection": {"alpha1": "x"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("not json"), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(R"({"tracking": {"strategy": "sideways"}})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(R"({"tracking": {"verification_threshold": 1.5}})"),
      ConfigError);
}

TEST_CASE("config round-trips through its canonical form") {
  const std::string text =
      R"({"world": {"dims": 16, "n_identities": 9},
          "protection": {"scheme": "fixed_aux", "delta": 0.4},
          "tracking": {"strategy": "dynamic"},
          "sweep": {"protection.delta": [0.1, 0.2]},
          "master_seed": 3})";
  ExperimentConfig cfg = parse_experiment_config(text);
  std::string canonical = serialize_experiment_config(cfg);
  ExperimentConfig reparsed = parse_experiment_config(canonical);
  CHECK(serialize_experiment_config(reparsed) == canonical);
  CHECK(reparsed.world.dims == 16);
  CHECK(reparsed.scheme == "fixed_aux");
  CHECK(reparsed.sweep.at("protection.delta") == std::vector<double>{0.1, 0.2});
}

TEST_CASE("apply_override rejects unknown parameters") {
  ExperimentConfig cfg = tiny_config();
  apply_override(cfg, "protection.delta", 0.7);
  CHECK(cfg.protection.delta == 0.7);
  CHECK_THROWS_AS(apply_override(cfg, "protection.nope", 1.0), ConfigError);
}

TEST_CASE("minimal experiment smoke run") {
  ExperimentConfig cfg = tiny_config();
  cfg.scheme = "none";
  cfg.strategy = "static";
  cfg.n_trackees = 1;
  ExperimentResult r = run_experiment(cfg);
  REQUIRE(r.runs.size() == 1);
  CHECK(r.runs[0].report.cumulative_tsr.has_value());
  CHECK(r.mean_tsr.count("static") == 1);
}

TEST_CASE("identical config and seed give byte-identical reports") {
  ExperimentConfig cfg = tiny_config();
  TempDir a("divsim_repro_a"), b("divsim_repro_b");
  write_reports(cfg, run_experiment(cfg), a.path.string());
  write_reports(cfg, run_experiment(cfg), b.path.string());
  for (const char* f : {"iterations.csv", "summary.csv", "summary.json"})
    CHECK(slurp(a.path / f) == slurp(b.path / f));
}

TEST_CASE("sweep: empty grid is a config error") {
  CHECK_THROWS_AS(run_sweep(tiny_config()), ConfigError);
}

TEST_CASE("sweep cells are independent of grid composition") {
  ExperimentConfig cfg = tiny_config();
  cfg.strategy = "dynamic";
  cfg.sweep["protection.queue_capacity"] = {1, 5, 10};
  auto cells = run_sweep(cfg);
  REQUIRE(cells.size() == 3);

  // Each cell must equal a standalone run with the same derived seed.
  for (const auto& cell : cells) {
    ExperimentConfig solo = cfg;
    solo.sweep.clear();
    std::uint64_t seed = mix64(cfg.master_seed);
    for (const auto& [k, v] : cell.coordinates) {
      apply_override(solo, k, v);
      seed = combine_seed(seed, hash_string(k));
      seed = combine_seed(seed, std::bit_cast<std::uint64_t>(v));
    }
    solo.master_seed = seed;
    ExperimentResult standalone = run_experiment(solo);
    REQUIRE(standalone.runs.size() == cell.result.runs.size());
    for (size_t i = 0; i < standalone.runs.size(); ++i)
      CHECK(standalone.runs[i].report.cumulative_tsr ==
            cell.result.runs[i].report.cumulative_tsr);
  }
}

TEST_CASE("ablation arms: drop_div is bitwise the alpha2=0 run") {
  ExperimentConfig cfg = tiny_config();
  cfg.strategy = "dynamic";
  auto arms = run_ablation(cfg);
  REQUIRE(arms.count("drop_div") == 1);

  ExperimentConfig manual = cfg;
  manual.protection.alpha2 = 0.0;
  ExperimentResult expected = run_experiment(manual);
  const ExperimentResult& got = arms.at("drop_div");
  REQUIRE(expected.runs.size() == got.runs.size());
  for (size_t i = 0; i < expected.runs.size(); ++i) {
    REQUIRE(expected.runs[i].report.iterations.size() ==
            got.runs[i].report.iterations.size());
    for (size_t t = 0; t < expected.runs[i].report.iterations.size(); ++t)
      CHECK(expected.runs[i].report.iterations[t].recognized_image_ids ==
            got.runs[i].report.iterations[t].recognized_image_ids);
  }
}

TEST_CASE("ablation requires the full objective as base") {
  ExperimentConfig cfg = tiny_config();
  cfg.scheme = "fixed_aux";
  CHECK_THROWS_AS(run_ablation(cfg), ConfigError);
}

TEST_CASE("verification mode requires dynamic strategy") {
  CHECK_THROWS_AS(
      parse_experiment_config(R"({"tracking": {"mode": "verification"}})"),
      ConfigError);
  ExperimentConfig ok = parse_experiment_config(
      R"({"tracking": {"mode": "verification", "strategy": "dynamic"}})");
  CHECK(ok.mode == "verification");
}
