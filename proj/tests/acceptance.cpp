// Acceptance gate: one PASS/FAIL line per criterion, checked by doctest so
// a red criterion fails the test run.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "divsim/experiment.hpp"
#include "divsim/protection.hpp"
#include "divsim/rng.hpp"
#include "divsim/tracking.hpp"
#include "test_util.hpp"

using namespace divsim;
using namespace divsim::test;
namespace fs = std::filesystem;

namespace {

bool note(int n, const char* name, bool ok) {
  std::printf("ACCEPTANCE %2d %-34s %s\n", n, name, ok ? "PASS" : "FAIL");
  std::fflush(stdout);
  return ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// --- shared benchmark-world runs (criteria 5-7) ---------------------------

ExperimentConfig benchmark_config() {
  ExperimentConfig cfg;  // calibrated defaults: 500 x 20, d=128, 5 trackees
  cfg.master_seed = 1;
  return cfg;
}

struct BenchmarkRuns {
  ExperimentResult none_both;          // scheme none, static+dynamic
  ExperimentResult fixed_both;         // fixed_aux, clean knowledge
  ExperimentResult fixed_static_prot;  // fixed_aux, protected knowledge
  ExperimentResult random_dyn;         // random_aux, dynamic
  std::map<std::string, ExperimentResult> arms;  // divtrackee ablation, dynamic
  double table1_seconds = 0.0;
};

const BenchmarkRuns& benchmark_runs() {
  static const BenchmarkRuns runs = [] {
    BenchmarkRuns r;
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentConfig cfg = benchmark_config();
    cfg.scheme = "none";
    cfg.strategy = "both";
    r.none_both = run_experiment(cfg);

    cfg.scheme = "fixed_aux";
    r.fixed_both = run_experiment(cfg);

    cfg.strategy = "static";
    cfg.initial_knowledge = "protected";
    r.fixed_static_prot = run_experiment(cfg);
    r.table1_seconds = seconds_since(t0);

    cfg = benchmark_config();
    cfg.strategy = "dynamic";
    cfg.scheme = "random_aux";
    r.random_dyn = run_experiment(cfg);

    cfg.scheme = "divtrackee";
    r.arms = run_ablation(cfg);
    return r;
  }();
  return runs;
}

}  // namespace

TEST_CASE("criterion 1: matching oracle equivalence") {
  const auto t0 = std::chrono::steady_clock::now();
  auto rng = std::mt19937_64(20260823);
  const int d = 16;
  GalleryDatabase db;
  std::vector<Embedding> recs;
  for (int i = 0; i < 5000; ++i) {
    Embedding e = random_unit(rng, d);
    db.insert(e, i % 61, i);
    recs.push_back(std::move(e));
  }
  int mismatches = 0;
  for (int q = 0; q < 1000; ++q) {
    const Embedding query = random_unit(rng, d);
    // Independent brute-force argmax with first-wins tie break.
    size_t best = 0;
    double best_score = recs[0].dot(query);
    for (size_t i = 1; i < recs.size(); ++i)
      if (recs[i].dot(query) > best_score) best_score = recs[(best = i)].dot(query);
    const MatchResult got = db.recognize(query);
    if (got.matched_record != static_cast<int>(best) ||
        got.identity != static_cast<int>(best) % 61)
      ++mismatches;
  }
  const double secs = seconds_since(t0);
  CHECK(note(1, "matching oracle, 1000x5000 d=16", mismatches == 0 && secs < 5.0));
}

TEST_CASE("criterion 2: dynamic dominates static over 50 random configs") {
  const char* schemes[] = {"none", "untargeted", "fixed_aux", "random_aux",
                           "divtrackee"};
  auto rng = std::mt19937_64(5150);
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig cfg;
    cfg.world.n_identities = 4 + static_cast<int>(rng() % 7);
    cfg.world.images_per_identity = 3 + static_cast<int>(rng() % 4);
    cfg.world.n_extractors = 3;
    cfg.world.aux_pool_size = 30;
    cfg.world.dims = 8;
    cfg.world.intra_sigma = 0.2 + 0.015 * static_cast<double>(rng() % 60);
    cfg.scheme = schemes[trial % 5];
    cfg.protection.steps = 15;
    cfg.protection.substitute_extractors = {1, 2};
    cfg.strategy = "both";
    cfg.n_trackees = 2;
    cfg.master_seed = rng();
    const ExperimentResult res = run_experiment(cfg);
    for (size_t i = 0; i + 1 < res.runs.size(); i += 2) {
      const TrackingReport& st = res.runs[i].report;
      const TrackingReport& dy = res.runs[i + 1].report;
      if (st.cumulative_tsr && *dy.cumulative_tsr < *st.cumulative_tsr) ok = false;
      if (dy.iterations[0].recognized_image_ids !=
          st.iterations[0].recognized_image_ids)
        ok = false;
    }
  }
  CHECK(note(2, "dominance + iteration-1 identity", ok));
}

TEST_CASE("criterion 3: gradient suite vs finite differences") {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  double worst = 0.0;
  for (int d : {2, 8, 128}) {
    WorldConfig wcfg;
    wcfg.n_identities = 3;
    wcfg.images_per_identity = 2;
    wcfg.n_extractors = 3;
    wcfg.aux_pool_size = 5;
    wcfg.dims = d;
    wcfg.seed = 400 + d;
    const World world = generate_world(wcfg);
    const std::vector<int> subs = {1, 2};
    ProtectionConfig pcfg;
    pcfg.substitute_extractors = subs;
    auto rng = std::mt19937_64(900 + d);

    for (int state = 0; state < 100; ++state) {
      const Eigen::VectorXd w = random_unit(rng, d);
      const Eigen::VectorXd x_ee = random_unit(rng, d);
      const Eigen::VectorXd aux = random_unit(rng, d);
      const Eigen::VectorXd w_init = random_unit(rng, d);
      DiversityQueue queue(pcfg.queue_capacity);
      const int n_q = 1 + state % 4;
      for (int i = 0; i < n_q; ++i) queue.push(random_unit(rng, d));

      LossContext ctx;
      ctx.world = &world;
      ctx.config = &pcfg;
      ctx.x_ee_latent = x_ee;
      ctx.aux_latent = aux;
      ctx.queue = &queue;
      ctx.w_init = w_init;

      const std::pair<const char*, int> terms[] = {
          {"adv", 0}, {"guide", 1}, {"div", 2}, {"latent", 3}, {"total", 4}};
      for (const auto& [label, which] : terms) {
        std::function<double(const Eigen::VectorXd&)> f;
        Eigen::VectorXd analytic;
        switch (which) {
          case 0:
            f = [&](const Eigen::VectorXd& v) {
              return loss_adv(v, x_ee, subs, world);
            };
            analytic = loss_adv_grad(w, x_ee, subs, world);
            break;
          case 1:
            f = [&](const Eigen::VectorXd& v) {
              return loss_guide(v, aux, pcfg.delta, subs, world);
            };
            analytic = loss_guide_grad(w, aux, pcfg.delta, subs, world);
            break;
          case 2:
            f = [&](const Eigen::VectorXd& v) {
              return loss_div(v, queue, pcfg.queue_capacity, subs, world);
            };
            analytic = loss_div_grad(w, queue, pcfg.queue_capacity, subs, world);
            break;
          case 3:
            f = [&](const Eigen::VectorXd& v) { return loss_latent(v, w_init); };
            analytic = loss_latent_grad(w, w_init);
            break;
          default:
            f = [&](const Eigen::VectorXd& v) { return total_loss(v, ctx); };
            analytic = total_loss_grad(w, ctx);
        }
        const Eigen::VectorXd fd = finite_difference_grad(f, w, 1e-6);
        const double err = relative_error(analytic, fd);
        worst = std::max(worst, err);
        if (err >= 1e-5) ok = false;
        (void)label;
      }
    }
  }
  const double secs = seconds_since(t0);
  std::printf("  gradient suite: worst relative error %.3g, %.1fs\n", worst, secs);
  CHECK(note(3, "analytic gradients vs FD", ok && secs < 30.0));
}

TEST_CASE("criterion 4: termination and bookkeeping on 50 random runs") {
  auto rng = std::mt19937_64(41);
  TrackingScenario s;
  s.mode = MatchMode::kRecognition;
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 8;
    std::uniform_int_distribution<int> n_ids(3, 8), n_img(1, 5);
    std::uniform_real_distribution<double> spread(0.1, 0.9);
    GalleryDatabase gallery;
    std::vector<QueryImage> queries;
    const int ids = n_ids(rng);
    const double sigma = spread(rng);
    for (int id = 0; id < ids; ++id) {
      const Eigen::VectorXd mean = random_unit(rng, d);
      for (int i = 0, n = n_img(rng); i < n; ++i)
        gallery.insert((mean + sigma * random_vector(rng, d)).normalized(), id,
                       id * 100 + i);
      for (int i = 0, n = n_img(rng); i < n; ++i)
        queries.push_back(QueryImage{
            id * 100 + 50 + i, id,
            (mean + sigma * random_vector(rng, d)).normalized()});
    }
    const TrackingReport r = run_dynamic(gallery, queries, 0, s);

    std::vector<int> all;
    int prev = static_cast<int>(gallery.size());
    for (const auto& it : r.iterations) {
      all.insert(all.end(), it.recognized_image_ids.begin(),
                 it.recognized_image_ids.end());
      if (it.gallery_size_after - prev !=
          static_cast<int>(it.recognized_image_ids.size()))
        ok = false;
      if (it.true_positives + it.false_positives !=
          static_cast<int>(it.recognized_image_ids.size()))
        ok = false;
      prev = it.gallery_size_after;
    }
    std::vector<int> dedup = all;
    std::sort(dedup.begin(), dedup.end());
    dedup.erase(std::unique(dedup.begin(), dedup.end()), dedup.end());
    if (dedup.size() != all.size()) ok = false;
    if (r.total_iterations > static_cast<int>(queries.size()) + 1) ok = false;
    if (r.cumulative_tsr && *r.cumulative_psr != 1.0 - *r.cumulative_tsr)
      ok = false;
  }
  CHECK(note(4, "termination & bookkeeping", ok));
}

TEST_CASE("criterion 5: directional pattern of the protection table") {
  const BenchmarkRuns& b = benchmark_runs();
  const double none_static = b.none_both.mean_tsr.at("static");
  const double none_dyn = b.none_both.mean_tsr.at("dynamic");
  const double fixed_static = b.fixed_both.mean_tsr.at("static");
  const double fixed_dyn = b.fixed_both.mean_tsr.at("dynamic");
  const double fixed_static_prot = b.fixed_static_prot.mean_tsr.at("static");
  std::printf(
      "  benchmark world: none static %.3f dyn %.3f | fixed_aux static %.3f "
      "dyn %.3f | fixed_aux protected-knowledge static %.3f | %.1fs\n",
      none_static, none_dyn, fixed_static, fixed_dyn, fixed_static_prot,
      b.table1_seconds);
  const bool a = none_dyn >= 0.95;
  const bool bb = fixed_static <= 0.40 && fixed_dyn >= 0.80;
  const bool c = fixed_static_prot >= fixed_static;
  CHECK(note(5, "table-1 pattern (a,b,c) under 60s",
             a && bb && c && b.table1_seconds < 60.0));
}

TEST_CASE("criterion 6: diversity breaks the dynamic cascade") {
  const BenchmarkRuns& b = benchmark_runs();
  const double fixed_dyn = b.fixed_both.mean_tsr.at("dynamic");
  const double random_dyn = b.random_dyn.mean_tsr.at("dynamic");
  const double div_dyn = b.arms.at("full").mean_tsr.at("dynamic");
  std::printf("  dynamic TSR: fixed_aux %.3f, random_aux %.3f, divtrackee %.3f\n",
              fixed_dyn, random_dyn, div_dyn);
  CHECK(note(6, "divtrackee & random-aux vs fixed-aux",
             div_dyn <= fixed_dyn - 0.30 && random_dyn < fixed_dyn));
}

TEST_CASE("criterion 7: ablation ordering") {
  const BenchmarkRuns& b = benchmark_runs();
  const double full = b.arms.at("full").mean_tsr.at("dynamic");
  const double drop_guide = b.arms.at("drop_guide").mean_tsr.at("dynamic");
  const double drop_div = b.arms.at("drop_div").mean_tsr.at("dynamic");
  const double drop_both = b.arms.at("drop_both").mean_tsr.at("dynamic");
  std::printf("  arms: full %.3f, drop_guide %.3f, drop_div %.3f, drop_both %.3f\n",
              full, drop_guide, drop_div, drop_both);
  CHECK(note(7, "full <= partial <= drop_both (+0.20)",
             full <= drop_guide && drop_guide <= drop_both && full <= drop_div &&
                 drop_div <= drop_both && drop_both - full >= 0.20));
}

TEST_CASE("criterion 8: verification mode") {
  bool ok = true;
  TrackingScenario s;
  s.mode = MatchMode::kVerification;

  auto at_deg = [](double deg) -> Embedding {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    return Eigen::Vector2d(std::cos(rad), std::sin(rad));
  };

  s.verification_threshold = -1.0;
  std::vector<QueryImage> queries = {QueryImage{1, 0, at_deg(20)},
                                     QueryImage{2, 0, at_deg(50)}};
  TrackingReport vac = run_dynamic_verification({at_deg(0)}, queries, 0, s);
  if (vac.iterations[0].recognized_image_ids != std::vector<int>{1, 2}) ok = false;

  s.verification_threshold = 0.542;
  TrackingReport orth = run_dynamic_verification(
      {Eigen::Vector2d(1, 0)}, {QueryImage{9, 0, Eigen::Vector2d(0, 1)}}, 0, s);
  if (orth.total_iterations != 1 || !orth.iterations[0].recognized_image_ids.empty())
    ok = false;

  s.verification_threshold = 0.8;
  std::vector<QueryImage> chain = {QueryImage{1, 0, at_deg(30)},
                                   QueryImage{2, 0, at_deg(55)}};
  TrackingReport r = run_dynamic_verification({at_deg(0)}, chain, 0, s);
  if (r.total_iterations != 3 ||
      r.iterations[0].recognized_image_ids != std::vector<int>{1} ||
      r.iterations[1].recognized_image_ids != std::vector<int>{2})
    ok = false;

  CHECK(note(8, "verification thresholds & chain", ok));
}

TEST_CASE("criterion 9: diversity queue semantics") {
  WorldConfig wcfg;
  wcfg.n_identities = 4;
  wcfg.images_per_identity = 12;
  wcfg.n_extractors = 3;
  wcfg.aux_pool_size = 40;
  wcfg.dims = 16;
  wcfg.seed = 99;
  const World world = generate_world(wcfg);

  std::vector<ImageRecord> images;
  for (const auto& img : world.images)
    if (img.identity == 0) images.push_back(img);
  REQUIRE(images.size() == 12);

  ProtectionConfig pcfg;
  pcfg.substitute_extractors = {1, 2};
  pcfg.seed = 7;

  bool ok = true;
  DiversityQueue queue(pcfg.queue_capacity);
  std::vector<ProtectResult> results;
  for (const auto& img : images)
    results.push_back(protect_image(img, queue, world.aux_pool, pcfg, world));
  if (queue.size() != 10) ok = false;
  const Extractor& first_sub = world.extractors[pcfg.substitute_extractors[0]];
  for (int i = 0; i < 10; ++i)
    if (embed(first_sub, results[i + 2].record.latent) != queue.entries()[i])
      ok = false;

  // Paired run with the diversity term off: same seeds, lower spread.
  ProtectionConfig off = pcfg;
  off.alpha2 = 0.0;
  auto spread = [&](const std::vector<ProtectResult>& rs) {
    double sum = 0.0;
    int n = 0;
    for (size_t i = 0; i < rs.size(); ++i)
      for (size_t j = i + 1; j < rs.size(); ++j, ++n)
        sum += dissimilarity(embed(first_sub, rs[i].record.latent),
                             embed(first_sub, rs[j].record.latent));
    return sum / n;
  };
  const auto with_div = protect_set(images, pcfg, world);
  const auto without_div = protect_set(images, off, world);
  if (!(spread(with_div) > spread(without_div))) ok = false;

  CHECK(note(9, "queue FIFO + diversity spread", ok));
}

TEST_CASE("criterion 10: byte-identical report reruns") {
  ExperimentConfig cfg;
  cfg.world.n_identities = 10;
  cfg.world.images_per_identity = 5;
  cfg.world.n_extractors = 3;
  cfg.world.aux_pool_size = 40;
  cfg.world.dims = 16;
  cfg.protection.steps = 10;
  cfg.protection.substitute_extractors = {1, 2};
  cfg.n_trackees = 2;
  cfg.master_seed = 123;

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string{std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>()};
  };
  const fs::path a = fs::temp_directory_path() / "divsim_accept_a";
  const fs::path b = fs::temp_directory_path() / "divsim_accept_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_reports(cfg, run_experiment(cfg), a.string());
  write_reports(cfg, run_experiment(cfg), b.string());
  bool ok = true;
  for (const char* f : {"iterations.csv", "summary.csv", "summary.json"})
    if (slurp(a / f) != slurp(b / f)) ok = false;
  fs::remove_all(a);
  fs::remove_all(b);
  CHECK(note(10, "reproducible reports", ok));
}
