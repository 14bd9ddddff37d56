#include "divsim/tracking.hpp"

#include <algorithm>

#include "divsim/errors.hpp"
#include "divsim/rng.hpp"

namespace divsim {

void validate_scenario(const TrackingScenario& s) {
  if (s.mode == MatchMode::kVerification &&
      (s.verification_threshold < -1.0 || s.verification_threshold > 1.0))
    throw InvalidConfigError("verification_threshold must lie in [-1, 1]");
  if (s.fp_tolerance < 0) throw InvalidConfigError("fp_tolerance must be >= 0");
  if (s.preprocessing_sigma < 0)
    throw InvalidConfigError("preprocessing_sigma must be >= 0");
}

Embedding preprocess_query(const Embedding& query, double sigma,
                           std::uint64_t seed) {
  if (sigma == 0.0) return query;
  auto rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd noise(query.size());
  for (int i = 0; i < query.size(); ++i) noise[i] = normal(rng);
  return normalize(query + sigma * noise);
}

namespace {

std::vector<QueryImage> apply_preprocessing(const std::vector<QueryImage>& queries,
                                            const TrackingScenario& scenario) {
  if (scenario.preprocessing_sigma == 0.0) return queries;
  std::vector<QueryImage> out = queries;
  for (auto& q : out)
    q.embedding = preprocess_query(
        q.embedding, scenario.preprocessing_sigma,
        combine_seed(scenario.preprocessing_seed,
                     static_cast<std::uint64_t>(q.image_id)));
  return out;
}

int count_trackee(const std::vector<QueryImage>& queries, int trackee_identity) {
  int n = 0;
  for (const auto& q : queries)
    if (q.identity == trackee_identity) ++n;
  return n;
}

void finalize_report(TrackingReport& report) {
  int tp = 0;
  int fp = 0;
  for (const auto& it : report.iterations) {
    tp += it.true_positives;
    fp += it.false_positives;
  }
  report.cumulative_false_positives = fp;
  report.total_iterations = static_cast<int>(report.iterations.size());
  if (report.trackee_query_count > 0) {
    report.cumulative_tsr =
        static_cast<double>(tp) / static_cast<double>(report.trackee_query_count);
    report.cumulative_psr = 1.0 - *report.cumulative_tsr;
  }
}

// Core recognition loop shared by the static and dynamic strategies. All
// matches within an iteration are evaluated against the gallery snapshot
// D_g(t-1) before a single batch insert.
TrackingReport run_recognition(GalleryDatabase db,
                               const std::vector<QueryImage>& queries,
                               int trackee_identity,
                               const TrackingScenario& scenario, int max_iterations) {
  validate_scenario(scenario);
  if (db.empty()) throw EmptyGalleryError();
  if (queries.empty()) throw EmptyQuerySetError();

  TrackingReport report;
  report.trackee_query_count = count_trackee(queries, trackee_identity);

  std::vector<QueryImage> remaining = apply_preprocessing(queries, scenario);
  for (int t = 1;; ++t) {
    std::vector<size_t> matched;
    for (size_t i = 0; i < remaining.size(); ++i) {
      if (db.recognize(remaining[i].embedding).identity == trackee_identity)
        matched.push_back(i);
    }

    IterationRecord rec;
    rec.iteration = t;
    for (size_t i : matched) {
      rec.recognized_image_ids.push_back(remaining[i].image_id);
      if (remaining[i].identity == trackee_identity)
        ++rec.true_positives;
      else
        ++rec.false_positives;
    }
    std::sort(rec.recognized_image_ids.begin(), rec.recognized_image_ids.end());

    for (size_t i : matched)
      db.insert(remaining[i].embedding, trackee_identity, remaining[i].image_id);
    rec.gallery_size_after = static_cast<int>(db.size());
    report.iterations.push_back(std::move(rec));

    if (matched.empty() || t >= max_iterations) break;

    std::vector<QueryImage> next;
    next.reserve(remaining.size() - matched.size());
    size_t mi = 0;
    for (size_t i = 0; i < remaining.size(); ++i) {
      if (mi < matched.size() && matched[mi] == i) {
        ++mi;
        continue;
      }
      next.push_back(std::move(remaining[i]));
    }
    remaining = std::move(next);
  }

  finalize_report(report);
  return report;
}

}  // namespace

TrackingReport run_static(const GalleryDatabase& gallery,
                          const std::vector<QueryImage>& queries,
                          int trackee_identity, const TrackingScenario& scenario) {
  return run_recognition(gallery, queries, trackee_identity, scenario, 1);
}

TrackingReport run_dynamic(GalleryDatabase gallery,
                           const std::vector<QueryImage>& queries,
                           int trackee_identity, const TrackingScenario& scenario) {
  return run_recognition(std::move(gallery), queries, trackee_identity, scenario,
                         static_cast<int>(queries.size()) + 1);
}

TrackingReport run_gallery_target(GalleryDatabase protected_gallery,
                                  const std::vector<QueryImage>& clean_queries,
                                  int trackee_identity,
                                  const TrackingScenario& scenario) {
  // Role assignment differs only in what the caller placed in the gallery
  // (perturbed trackee records) and queries (clean images); the update loop
  // is identical.
  return run_dynamic(std::move(protected_gallery), clean_queries, trackee_identity,
                     scenario);
}

TrackingReport run_dynamic_verification(std::vector<Embedding> references,
                                        const std::vector<QueryImage>& queries,
                                        int trackee_identity,
                                        const TrackingScenario& scenario) {
  validate_scenario(scenario);
  if (references.empty()) throw EmptyReferenceSetError();
  if (queries.empty()) throw EmptyQuerySetError();

  TrackingReport report;
  report.trackee_query_count = count_trackee(queries, trackee_identity);

  std::vector<QueryImage> remaining = apply_preprocessing(queries, scenario);
  for (int t = 1;; ++t) {
    const size_t snapshot = references.size();
    std::vector<size_t> matched;
    for (size_t i = 0; i < remaining.size(); ++i) {
      bool hit = false;
      for (size_t r = 0; r < snapshot && !hit; ++r)
        hit = references[r].dot(remaining[i].embedding) >=
              scenario.verification_threshold;
      if (hit) matched.push_back(i);
    }

    IterationRecord rec;
    rec.iteration = t;
    for (size_t i : matched) {
      rec.recognized_image_ids.push_back(remaining[i].image_id);
      if (remaining[i].identity == trackee_identity)
        ++rec.true_positives;
      else
        ++rec.false_positives;
    }
    std::sort(rec.recognized_image_ids.begin(), rec.recognized_image_ids.end());

    for (size_t i : matched) references.push_back(remaining[i].embedding);
    rec.gallery_size_after = static_cast<int>(references.size());
    report.iterations.push_back(std::move(rec));

    if (matched.empty()) break;

    std::vector<QueryImage> next;
    next.reserve(remaining.size() - matched.size());
    size_t mi = 0;
    for (size_t i = 0; i < remaining.size(); ++i) {
      if (mi < matched.size() && matched[mi] == i) {
        ++mi;
        continue;
      }
      next.push_back(std::move(remaining[i]));
    }
    remaining = std::move(next);
  }

  finalize_report(report);
  return report;
}

Metrics compute_metrics(const TrackingReport& report, int trackee_query_count) {
  if (trackee_query_count <= 0) throw ZeroTrackeeQueriesError();
  Metrics m;
  int tp = 0;
  for (const auto& it : report.iterations) {
    tp += it.true_positives;
    m.fp_per_iteration.push_back(it.false_positives);
    m.fp_total += it.false_positives;
  }
  m.tsr = static_cast<double>(tp) / static_cast<double>(trackee_query_count);
  m.psr = 1.0 - m.tsr;
  return m;
}

}  // namespace divsim
