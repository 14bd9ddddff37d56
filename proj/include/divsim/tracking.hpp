#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "divsim/embedding.hpp"
#include "divsim/gallery.hpp"

namespace divsim {

enum class Strategy { kStatic, kDynamic };
enum class MatchMode { kRecognition, kVerification };
enum class InitialKnowledge { kClean, kProtected };

struct TrackingScenario {
  Strategy strategy = Strategy::kDynamic;
  MatchMode mode = MatchMode::kRecognition;
  InitialKnowledge initial_knowledge = InitialKnowledge::kClean;
  int tracker_extractor = 0;
  double verification_threshold = 0.542;
  int fp_tolerance = 0;  // reported against, never enforced
  double preprocessing_sigma = 0.0;
  std::uint64_t preprocessing_seed = 0;
};

void validate_scenario(const TrackingScenario& s);

// A query as seen by the tracker: embedding in the tracker extractor's space
// plus ground-truth identity for scoring.
struct QueryImage {
  int image_id = 0;
  int identity = 0;
  Embedding embedding;
};

struct IterationRecord {
  int iteration = 0;  // t >= 1
  std::vector<int> recognized_image_ids;  // sorted ascending
  int true_positives = 0;
  int false_positives = 0;
  int gallery_size_after = 0;
};

struct TrackingReport {
  std::vector<IterationRecord> iterations;
  int total_iterations = 0;
  int trackee_query_count = 0;
  std::optional<double> cumulative_tsr;  // empty when trackee_query_count == 0
  std::optional<double> cumulative_psr;
  int cumulative_false_positives = 0;
};

struct Metrics {
  double tsr = 0.0;
  double psr = 0.0;
  int fp_total = 0;
  std::vector<int> fp_per_iteration;
};

// Single recognition pass of every query against the fixed gallery. Equals
// the first iteration of run_dynamic on identical inputs.
TrackingReport run_static(const GalleryDatabase& gallery,
                          const std::vector<QueryImage>& queries,
                          int trackee_identity, const TrackingScenario& scenario);

// Iterative gallery enrichment: every query recognized as the trackee is
// inserted under the trackee label (false positives included) and removed
// from the query set; terminates when an iteration recognizes nothing.
TrackingReport run_dynamic(GalleryDatabase gallery,
                           const std::vector<QueryImage>& queries,
                           int trackee_identity, const TrackingScenario& scenario);

// Same iterative loop with the protected-gallery role assignment: clean
// recognized queries enrich the protected gallery.
TrackingReport run_gallery_target(GalleryDatabase protected_gallery,
                                  const std::vector<QueryImage>& clean_queries,
                                  int trackee_identity,
                                  const TrackingScenario& scenario);

// Verification-mode dynamic tracking: thresholded any-reference matching;
// matched queries join the reference set.
TrackingReport run_dynamic_verification(std::vector<Embedding> references,
                                        const std::vector<QueryImage>& queries,
                                        int trackee_identity,
                                        const TrackingScenario& scenario);

Metrics compute_metrics(const TrackingReport& report, int trackee_query_count);

// Embedding-space stand-in for image preprocessing defenses: adds seeded
// gaussian noise of scale sigma, then renormalizes. sigma = 0 is the identity.
Embedding preprocess_query(const Embedding& query, double sigma,
                           std::uint64_t seed);

}  // namespace divsim
