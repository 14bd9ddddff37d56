#pragma once

#include <Eigen/Core>
#include <vector>

#include "divsim/embedding.hpp"

namespace divsim {

struct GalleryRecord {
  Embedding embedding;
  int identity = 0;
  int image_id = 0;
  int insertion_index = 0;
};

struct MatchResult {
  int identity = 0;
  double best_score = 0.0;  // cosine similarity of the winning record
  int matched_record = 0;   // image_id
};

// Append-only gallery with exhaustive argmax matching. Ties break toward the
// smallest insertion index. Records are never removed.
class GalleryDatabase {
 public:
  GalleryDatabase() = default;

  int insert(Embedding embedding, int identity, int image_id);

  MatchResult recognize(const Embedding& query) const;

  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  int dims() const { return dims_; }
  const std::vector<GalleryRecord>& records() const { return records_; }

 private:
  std::vector<GalleryRecord> records_;
  Eigen::MatrixXd columns_;  // d x capacity, grown geometrically
  int dims_ = -1;
};

// Thresholded any-reference verification matcher. Inclusive comparison:
// true iff max_ref cos(query, ref) >= threshold.
bool verify(const std::vector<Embedding>& references, const Embedding& query,
            double threshold);

}  // namespace divsim
