#include "divsim/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "divsim/errors.hpp"
#include "divsim/rng.hpp"

namespace divsim {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::vector<int> select_trackees(const ExperimentConfig& cfg) {
  std::vector<int> ids(cfg.world.n_identities);
  std::iota(ids.begin(), ids.end(), 0);
  auto rng = make_rng(derive_seed(cfg.master_seed, {hash_string("trackees")}));
  for (size_t i = 0; i < static_cast<size_t>(cfg.n_trackees); ++i) {
    std::uniform_int_distribution<size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(cfg.n_trackees);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Seeded per-identity split of non-trackee images into gallery and query
// portions. Returns the query image indices (sorted) within that identity's
// image list.
std::vector<size_t> query_indices_for_identity(const ExperimentConfig& cfg,
                                               int identity, size_t n_images) {
  size_t n_q = cfg.query_split == 0.0
                   ? 0
                   : std::max<size_t>(
                         1, static_cast<size_t>(std::lround(cfg.query_split *
                                                            static_cast<double>(n_images))));
  n_q = std::min(n_q, n_images);
  std::vector<size_t> idx(n_images);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(derive_seed(
      cfg.master_seed, {hash_string("split"), static_cast<std::uint64_t>(identity)}));
  for (size_t i = 0; i < n_q; ++i) {
    std::uniform_int_distribution<size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n_q);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<ProtectResult> apply_scheme(const ExperimentConfig& cfg,
                                        const std::vector<ImageRecord>& images,
                                        const ProtectionConfig& pcfg,
                                        const World& world) {
  if (cfg.scheme == "none") {
    std::vector<ProtectResult> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(ProtectResult{img, 0.0});
    return out;
  }
  if (cfg.scheme == "untargeted")
    return baseline_protect(BaselineKind::kUntargeted, images, pcfg, world);
  if (cfg.scheme == "fixed_aux")
    return baseline_protect(BaselineKind::kFixedAux, images, pcfg, world);
  if (cfg.scheme == "random_aux")
    return baseline_protect(BaselineKind::kRandomAux, images, pcfg, world);
  return protect_set(images, pcfg, world);  // divtrackee
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  WorldConfig wcfg = cfg.world;
  wcfg.seed = derive_seed(cfg.master_seed, {hash_string("world")});
  const World world = generate_world(wcfg);
  const Extractor& tracker = world.extractors[cfg.tracker_extractor];

  // Per-identity image index (images are ordered identity-major already).
  std::vector<std::vector<size_t>> by_identity(wcfg.n_identities);
  for (size_t i = 0; i < world.images.size(); ++i)
    by_identity[world.images[i].identity].push_back(i);

  const std::vector<int> trackees = select_trackees(cfg);

  std::vector<std::string> strategies;
  if (cfg.strategy == "static" || cfg.strategy == "both")
    strategies.push_back("static");
  if (cfg.strategy == "dynamic" || cfg.strategy == "both")
    strategies.push_back("dynamic");

  ExperimentResult result;
  std::map<std::string, std::vector<double>> tsr_acc, psr_acc, fp_acc;

  for (size_t ti = 0; ti < trackees.size(); ++ti) {
    const int trackee = trackees[ti];
    std::vector<ImageRecord> trackee_images;
    for (size_t idx : by_identity[trackee]) trackee_images.push_back(world.images[idx]);
    if (trackee_images.size() < 2)
      throw ConfigError("trackee needs at least 2 images (seed + queries)");

    ProtectionConfig pcfg = cfg.protection;
    pcfg.seed = derive_seed(cfg.master_seed,
                            {hash_string("protect"), static_cast<std::uint64_t>(ti)});

    // The single tracker-held image is trackee_images[0]; the rest are the
    // posted query images.
    ImageRecord seed_image = trackee_images[0];
    std::vector<ImageRecord> posted(trackee_images.begin() + 1, trackee_images.end());

    std::vector<ImageRecord> trackee_queries;
    double mean_disp = 0.0;

    if (cfg.scenario_kind == "gallery_target") {
      // Perturbed gallery record, clean posted queries.
      auto seed_prot = apply_scheme(cfg, {seed_image}, pcfg, world);
      seed_image = seed_prot[0].record;
      mean_disp = seed_prot[0].latent_displacement;
      trackee_queries = posted;
    } else if (cfg.initial_knowledge == "protected") {
      // The seeded gallery image runs through the same pipeline as the
      // queries, threading one queue across all of them.
      auto prot = apply_scheme(cfg, trackee_images, pcfg, world);
      seed_image = prot[0].record;
      for (size_t i = 1; i < prot.size(); ++i) {
        trackee_queries.push_back(prot[i].record);
        mean_disp += prot[i].latent_displacement;
      }
      mean_disp /= static_cast<double>(prot.size() - 1);
    } else {
      auto prot = apply_scheme(cfg, posted, pcfg, world);
      for (const auto& p : prot) {
        trackee_queries.push_back(p.record);
        mean_disp += p.latent_displacement;
      }
      mean_disp /= static_cast<double>(prot.size());
    }

    GalleryDatabase gallery;
    gallery.insert(embed(tracker, seed_image.latent), trackee, seed_image.image_id);

    std::vector<QueryImage> queries;
    for (const auto& img : trackee_queries)
      queries.push_back(QueryImage{img.image_id, img.identity,
                                   embed(tracker, img.latent)});
    for (int identity = 0; identity < wcfg.n_identities; ++identity) {
      if (identity == trackee) continue;
      const auto& imgs = by_identity[identity];
      const auto q_idx = query_indices_for_identity(cfg, identity, imgs.size());
      size_t qi = 0;
      for (size_t j = 0; j < imgs.size(); ++j) {
        const ImageRecord& img = world.images[imgs[j]];
        const Embedding emb = embed(tracker, img.latent);
        if (qi < q_idx.size() && q_idx[qi] == j) {
          ++qi;
          queries.push_back(QueryImage{img.image_id, img.identity, emb});
        } else {
          gallery.insert(emb, img.identity, img.image_id);
        }
      }
    }

    TrackingScenario scenario;
    scenario.mode = cfg.mode == "verification" ? MatchMode::kVerification
                                               : MatchMode::kRecognition;
    scenario.initial_knowledge = cfg.initial_knowledge == "protected"
                                     ? InitialKnowledge::kProtected
                                     : InitialKnowledge::kClean;
    scenario.tracker_extractor = cfg.tracker_extractor;
    scenario.verification_threshold = cfg.verification_threshold;
    scenario.fp_tolerance = cfg.fp_tolerance;
    scenario.preprocessing_sigma = cfg.preprocessing_sigma;
    scenario.preprocessing_seed = derive_seed(
        cfg.master_seed, {hash_string("preproc"), static_cast<std::uint64_t>(ti)});

    for (const std::string& strat : strategies) {
      scenario.strategy =
          strat == "static" ? Strategy::kStatic : Strategy::kDynamic;
      TrackingReport report;
      if (scenario.mode == MatchMode::kVerification) {
        report = run_dynamic_verification(
            {gallery.records()[0].embedding}, queries, trackee, scenario);
      } else if (strat == "static") {
        report = run_static(gallery, queries, trackee, scenario);
      } else if (cfg.scenario_kind == "gallery_target") {
        report = run_gallery_target(gallery, queries, trackee, scenario);
      } else {
        report = run_dynamic(gallery, queries, trackee, scenario);
      }

      RunResult rr;
      rr.run_id = "t" + std::to_string(trackee) + "_" + strat;
      rr.trackee_identity = trackee;
      rr.strategy = strat;
      rr.mean_latent_displacement = mean_disp;
      if (report.cumulative_tsr) {
        tsr_acc[strat].push_back(*report.cumulative_tsr);
        psr_acc[strat].push_back(*report.cumulative_psr);
      }
      fp_acc[strat].push_back(report.cumulative_false_positives);
      rr.report = std::move(report);
      result.runs.push_back(std::move(rr));
    }
  }

  auto mean_of = [](const std::vector<double>& v) {
    return v.empty() ? 0.0
                     : std::accumulate(v.begin(), v.end(), 0.0) /
                           static_cast<double>(v.size());
  };
  for (const auto& [strat, v] : tsr_acc) result.mean_tsr[strat] = mean_of(v);
  for (const auto& [strat, v] : psr_acc) result.mean_psr[strat] = mean_of(v);
  for (const auto& [strat, v] : fp_acc) result.mean_fp[strat] = mean_of(v);
  return result;
}

void write_reports(const ExperimentConfig& cfg, const ExperimentResult& result,
                   const std::string& out_dir) {
  fs::path dir(out_dir);

  std::string iterations = "run_id,iteration,tp,fp,gallery_size\n";
  for (const auto& run : result.runs)
    for (const auto& it : run.report.iterations)
      iterations += run.run_id + ',' + std::to_string(it.iteration) + ',' +
                    std::to_string(it.true_positives) + ',' +
                    std::to_string(it.false_positives) + ',' +
                    std::to_string(it.gallery_size_after) + '\n';
  write_file_atomic(dir / "iterations.csv", iterations);

  std::string summary = "run_id,strategy,mode,initial_knowledge,tsr,psr,fp_total,T\n";
  for (const auto& run : result.runs) {
    const auto& r = run.report;
    summary += run.run_id + ',' + run.strategy + ',' + cfg.mode + ',' +
               cfg.initial_knowledge + ',' +
               (r.cumulative_tsr ? fmt_double(*r.cumulative_tsr) : "NA") + ',' +
               (r.cumulative_psr ? fmt_double(*r.cumulative_psr) : "NA") + ',' +
               std::to_string(r.cumulative_false_positives) + ',' +
               std::to_string(r.total_iterations) + '\n';
  }
  write_file_atomic(dir / "summary.csv", summary);

  Json j;
  j["config"] = Json::parse(serialize_experiment_config(cfg));
  Json per_run = Json::array();
  for (const auto& run : result.runs) {
    Json r;
    r["run_id"] = run.run_id;
    r["trackee_identity"] = run.trackee_identity;
    r["strategy"] = run.strategy;
    r["trackee_query_count"] = run.report.trackee_query_count;
    if (run.report.cumulative_tsr) {
      r["tsr"] = *run.report.cumulative_tsr;
      r["psr"] = *run.report.cumulative_psr;
    } else {
      r["tsr"] = nullptr;
      r["psr"] = nullptr;
    }
    r["fp_total"] = run.report.cumulative_false_positives;
    r["iterations"] = run.report.total_iterations;
    r["mean_latent_displacement"] = run.mean_latent_displacement;
    per_run.push_back(std::move(r));
  }
  j["runs"] = per_run;
  Json avg;
  for (const auto& [strat, v] : result.mean_tsr) avg[strat + "_tsr"] = v;
  for (const auto& [strat, v] : result.mean_psr) avg[strat + "_psr"] = v;
  for (const auto& [strat, v] : result.mean_fp) avg[strat + "_fp"] = v;
  j["averaged"] = avg;
  write_file_atomic(dir / "summary.json", j.dump(2) + "\n");
}

namespace {

std::string cell_dir_name(const std::map<std::string, double>& coords) {
  std::string name;
  for (const auto& [k, v] : coords) {
    if (!name.empty()) name += "__";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s=%g", k.c_str(), v);
    std::string part = buf;
    for (char& c : part)
      if (c == '/' || c == '.') c = '_';
    name += part;
  }
  return name;
}

}  // namespace

std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep.empty()) throw ConfigError("sweep grid is empty");
  for (const auto& [k, vals] : cfg.sweep)
    if (vals.empty()) throw ConfigError("sweep axis '" + k + "' has no values");

  std::vector<std::string> keys;
  for (const auto& [k, vals] : cfg.sweep) keys.push_back(k);

  std::vector<SweepCell> cells;
  std::vector<size_t> counter(keys.size(), 0);
  while (true) {
    SweepCell cell;
    ExperimentConfig cell_cfg = cfg;
    cell_cfg.sweep.clear();
    std::uint64_t seed = mix64(cfg.master_seed);
    for (size_t i = 0; i < keys.size(); ++i) {
      const double value = cfg.sweep.at(keys[i])[counter[i]];
      cell.coordinates[keys[i]] = value;
      apply_override(cell_cfg, keys[i], value);
      seed = combine_seed(seed, hash_string(keys[i]));
      seed = combine_seed(seed, std::bit_cast<std::uint64_t>(value));
    }
    cell_cfg.master_seed = seed;
    cell.result = run_experiment(cell_cfg);
    cells.push_back(std::move(cell));

    size_t axis = keys.size();
    while (axis > 0) {
      --axis;
      if (++counter[axis] < cfg.sweep.at(keys[axis]).size()) break;
      counter[axis] = 0;
      if (axis == 0) return cells;
    }
    if (keys.empty()) return cells;
  }
}

void write_sweep_report(const ExperimentConfig& cfg,
                        const std::vector<SweepCell>& cells,
                        const std::string& out_dir) {
  fs::path dir(out_dir);
  std::string csv;
  for (const auto& [k, vals] : cfg.sweep) csv += k + ',';
  csv += "strategy,tsr,psr,fp\n";
  for (const auto& cell : cells) {
    ExperimentConfig cell_cfg = cfg;
    cell_cfg.sweep.clear();
    std::uint64_t seed = mix64(cfg.master_seed);
    for (const auto& [k, v] : cell.coordinates) {
      apply_override(cell_cfg, k, v);
      seed = combine_seed(seed, hash_string(k));
      seed = combine_seed(seed, std::bit_cast<std::uint64_t>(v));
    }
    cell_cfg.master_seed = seed;
    write_reports(cell_cfg, cell.result,
                  (dir / "cells" / cell_dir_name(cell.coordinates)).string());
    for (const auto& [strat, tsr] : cell.result.mean_tsr) {
      std::string row;
      for (const auto& [k, v] : cell.coordinates) row += fmt_double(v) + ',';
      row += strat + ',' + fmt_double(tsr) + ',' +
             fmt_double(cell.result.mean_psr.at(strat)) + ',' +
             fmt_double(cell.result.mean_fp.at(strat)) + '\n';
      csv += row;
    }
  }
  write_file_atomic(dir / "sweep.csv", csv);
}

std::vector<std::string> ablation_arm_names() {
  return {"full", "drop_guide", "drop_div", "drop_both"};
}

std::map<std::string, ExperimentResult> run_ablation(const ExperimentConfig& cfg) {
  if (cfg.scheme != "divtrackee")
    throw ConfigError("ablation requires protection.scheme = divtrackee");
  std::map<std::string, ExperimentResult> arms;
  for (const std::string& arm : ablation_arm_names()) {
    ExperimentConfig acfg = cfg;
    if (arm == "drop_guide" || arm == "drop_both") acfg.protection.alpha1 = 0.0;
    if (arm == "drop_div" || arm == "drop_both") acfg.protection.alpha2 = 0.0;
    arms[arm] = run_experiment(acfg);
  }
  return arms;
}

void write_ablation_report(const ExperimentConfig& cfg,
                           const std::map<std::string, ExperimentResult>& arms,
                           const std::string& out_dir) {
  fs::path dir(out_dir);
  std::string csv = "arm,strategy,tsr,psr,fp\n";
  for (const std::string& arm : ablation_arm_names()) {
    auto it = arms.find(arm);
    if (it == arms.end()) continue;
    write_reports(cfg, it->second, (dir / "arms" / arm).string());
    for (const auto& [strat, tsr] : it->second.mean_tsr)
      csv += arm + ',' + strat + ',' + fmt_double(tsr) + ',' +
             fmt_double(it->second.mean_psr.at(strat)) + ',' +
             fmt_double(it->second.mean_fp.at(strat)) + '\n';
  }
  write_file_atomic(dir / "ablation.csv", csv);
}

}  // namespace divsim
