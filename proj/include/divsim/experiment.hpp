#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "divsim/protection.hpp"
#include "divsim/tracking.hpp"
#include "divsim/world.hpp"

namespace divsim {

// Declarative experiment description. Parsed from a strict JSON document:
// unknown keys are a hard error. Defaults here are the calibrated defaults
// recorded for the seeded benchmark world.
struct ExperimentConfig {
  WorldConfig world;  // world.seed is derived from master_seed, not configured

  // none | untargeted | fixed_aux | random_aux | divtrackee
  std::string scheme = "divtrackee";
  ProtectionConfig protection;

  std::string strategy = "both";            // static | dynamic | both
  std::string mode = "recognition";         // recognition | verification
  std::string initial_knowledge = "clean";  // clean | protected
  std::string scenario_kind = "query_target";  // query_target | gallery_target
  int tracker_extractor = 0;
  double verification_threshold = 0.542;
  int fp_tolerance = 0;
  double preprocessing_sigma = 0.0;
  double query_split = 0.1;  // fraction of non-trackee images used as queries

  int n_trackees = 5;
  std::map<std::string, std::vector<double>> sweep;
  std::string output_dir = "out";
  std::uint64_t master_seed = 1;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string serialize_experiment_config(const ExperimentConfig& cfg);

// Applies a sweep override like "protection.delta" = 0.4. Throws ConfigError
// for unknown parameter names.
void apply_override(ExperimentConfig& cfg, const std::string& name, double value);

struct RunResult {
  std::string run_id;
  int trackee_identity = 0;
  std::string strategy;  // "static" or "dynamic"
  TrackingReport report;
  double mean_latent_displacement = 0.0;
};

struct ExperimentResult {
  std::vector<RunResult> runs;
  // key: strategy name -> mean TSR over trackees (runs with defined TSR)
  std::map<std::string, double> mean_tsr;
  std::map<std::string, double> mean_psr;
  std::map<std::string, double> mean_fp;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes iterations.csv, summary.csv and summary.json under out_dir.
// Output is a pure function of (config, master_seed): reruns are
// byte-identical. Timing goes to a separate timing.log.
void write_reports(const ExperimentConfig& cfg, const ExperimentResult& result,
                   const std::string& out_dir);

struct SweepCell {
  std::map<std::string, double> coordinates;
  ExperimentResult result;
};

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg);
void write_sweep_report(const ExperimentConfig& cfg,
                        const std::vector<SweepCell>& cells,
                        const std::string& out_dir);

// Ablation arms over the full objective: zeroed guide and/or diversity
// weights, all seeds identical to the base run.
std::vector<std::string> ablation_arm_names();
std::map<std::string, ExperimentResult> run_ablation(const ExperimentConfig& cfg);
void write_ablation_report(const ExperimentConfig& cfg,
                           const std::map<std::string, ExperimentResult>& arms,
                           const std::string& out_dir);

}  // namespace divsim
