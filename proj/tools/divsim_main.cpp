#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "divsim/errors.hpp"
#include "divsim/experiment.hpp"
#include "divsim/rng.hpp"
#include "divsim/world.hpp"

namespace fs = std::filesystem;
using namespace divsim;

namespace {

ExperimentConfig load_config(const std::string& config_path,
                             std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_experiment_config(config_path);
  if (seed) cfg.master_seed = *seed;
  return cfg;
}

void write_timing(const std::string& out_dir, double seconds) {
  fs::create_directories(out_dir);
  std::ofstream out(fs::path(out_dir) / "timing.log");
  out << "wall_clock_seconds=" << seconds << "\n";
}

class Timer {
 public:
  double elapsed() const {
    return std::chrono::duration<double>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_ = clock::now();
};

int cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
  WorldConfig wcfg = cfg.world;
  wcfg.seed = derive_seed(cfg.master_seed, {hash_string("world")});
  World world = generate_world(wcfg);
  fs::create_directories(out_dir);
  export_world(world, (fs::path(out_dir) / "world.txt").string());
  std::cout << "wrote " << (fs::path(out_dir) / "world.txt").string() << " ("
            << world.images.size() << " images, d=" << wcfg.dims << ")\n";
  return 0;
}

int cmd_protect(const ExperimentConfig& cfg, const std::string& out_dir) {
  ExperimentConfig ecfg = cfg;
  WorldConfig wcfg = ecfg.world;
  wcfg.seed = derive_seed(ecfg.master_seed, {hash_string("world")});
  World world = generate_world(wcfg);

  // Protect the posted image set of every configured trackee and export the
  // protected records.
  std::vector<ImageRecord> protected_records;
  ExperimentResult unused;
  // Reuse the experiment path for trackee selection determinism.
  std::vector<std::vector<ImageRecord>> per_identity(wcfg.n_identities);
  for (const auto& img : world.images) per_identity[img.identity].push_back(img);

  ExperimentConfig sel_cfg = ecfg;
  // Trackee selection mirrors run_experiment.
  std::vector<int> ids(wcfg.n_identities);
  for (int i = 0; i < wcfg.n_identities; ++i) ids[i] = i;
  auto rng = make_rng(derive_seed(ecfg.master_seed, {hash_string("trackees")}));
  for (int i = 0; i < ecfg.n_trackees; ++i) {
    std::uniform_int_distribution<size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(ecfg.n_trackees);
  std::sort(ids.begin(), ids.end());

  for (size_t ti = 0; ti < ids.size(); ++ti) {
    ProtectionConfig pcfg = ecfg.protection;
    pcfg.seed = derive_seed(ecfg.master_seed,
                            {hash_string("protect"), static_cast<std::uint64_t>(ti)});
    std::vector<ImageRecord> posted(per_identity[ids[ti]].begin() + 1,
                                    per_identity[ids[ti]].end());
    std::vector<ProtectResult> prot;
    if (ecfg.scheme == "none") {
      for (const auto& img : posted) prot.push_back(ProtectResult{img, 0.0});
    } else if (ecfg.scheme == "untargeted") {
      prot = baseline_protect(BaselineKind::kUntargeted, posted, pcfg, world);
    } else if (ecfg.scheme == "fixed_aux") {
      prot = baseline_protect(BaselineKind::kFixedAux, posted, pcfg, world);
    } else if (ecfg.scheme == "random_aux") {
      prot = baseline_protect(BaselineKind::kRandomAux, posted, pcfg, world);
    } else {
      prot = protect_set(posted, pcfg, world);
    }
    for (auto& p : prot) protected_records.push_back(std::move(p.record));
  }

  fs::create_directories(out_dir);
  export_records(protected_records, (fs::path(out_dir) / "protected.txt").string());
  std::cout << "wrote " << (fs::path(out_dir) / "protected.txt").string() << " ("
            << protected_records.size() << " protected records)\n";
  return 0;
}

int cmd_track(const ExperimentConfig& cfg, const std::string& out_dir) {
  Timer timer;
  ExperimentResult result = run_experiment(cfg);
  write_reports(cfg, result, out_dir);
  write_timing(out_dir, timer.elapsed());
  for (const auto& [strat, tsr] : result.mean_tsr)
    std::cout << strat << " mean TSR = " << tsr << "\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  Timer timer;
  auto cells = run_sweep(cfg);
  write_sweep_report(cfg, cells, out_dir);
  write_timing(out_dir, timer.elapsed());
  std::cout << cells.size() << " sweep cells written to " << out_dir << "\n";
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& out_dir) {
  Timer timer;
  auto arms = run_ablation(cfg);
  write_ablation_report(cfg, arms, out_dir);
  write_timing(out_dir, timer.elapsed());
  for (const auto& arm : ablation_arm_names()) {
    auto it = arms.find(arm);
    if (it == arms.end()) continue;
    for (const auto& [strat, tsr] : it->second.mean_tsr)
      std::cout << arm << " " << strat << " mean TSR = " << tsr << "\n";
  }
  return 0;
}

int cmd_report(const std::string& out_dir) {
  if (!fs::exists(out_dir)) throw IoError("no such directory: " + out_dir);
  bool first = true;
  for (auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (entry.path().filename() != "summary.csv") continue;
    std::ifstream in(entry.path());
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {
        if (first) std::cout << "source," << line << "\n";
        header = false;
        first = false;
        continue;
      }
      std::cout << fs::relative(entry.path().parent_path(), out_dir).string()
                << "," << line << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-space simulator of dynamic facial-recognition "
               "tracking and diversity-promoting protection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Path to JSON experiment config");
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--seed", seed, "Master seed override");
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate and export a world");
  CLI::App* protect = app.add_subcommand("protect", "Export protected embeddings");
  CLI::App* track = app.add_subcommand("track", "Run a tracking experiment");
  CLI::App* sweep = app.add_subcommand("sweep", "Run a hyperparameter sweep");
  CLI::App* ablate = app.add_subcommand("ablate", "Run loss-term ablations");
  CLI::App* report = app.add_subcommand("report", "Print collected summaries");
  for (CLI::App* sub : {gen, protect, track, sweep, ablate, report})
    add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) return cmd_report(out_dir);
    ExperimentConfig cfg = load_config(config_path, seed);
    if (gen->parsed()) return cmd_gen(cfg, out_dir);
    if (protect->parsed()) return cmd_protect(cfg, out_dir);
    if (track->parsed()) return cmd_track(cfg, out_dir);
    if (sweep->parsed()) return cmd_sweep(cfg, out_dir);
    if (ablate->parsed()) return cmd_ablate(cfg, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
