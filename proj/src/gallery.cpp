#include "divsim/gallery.hpp"

#include "divsim/errors.hpp"

namespace divsim {

int GalleryDatabase::insert(Embedding embedding, int identity, int image_id) {
  if (dims_ < 0) {
    dims_ = static_cast<int>(embedding.size());
    columns_.resize(dims_, 16);
  } else if (embedding.size() != dims_) {
    throw DimensionMismatchError(dims_, embedding.size());
  }
  const int index = static_cast<int>(records_.size());
  if (index >= columns_.cols())
    columns_.conservativeResize(Eigen::NoChange, columns_.cols() * 2);
  columns_.col(index) = embedding;
  records_.push_back(GalleryRecord{std::move(embedding), identity, image_id, index});
  return index;
}

MatchResult GalleryDatabase::recognize(const Embedding& query) const {
  if (records_.empty()) throw EmptyGalleryError();
  if (query.size() != dims_) throw DimensionMismatchError(dims_, query.size());
  const int n = static_cast<int>(records_.size());
  Eigen::VectorXd scores = columns_.leftCols(n).transpose() * query;
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (scores[i] > scores[best]) best = i;  // strict: keeps earliest on ties
  const GalleryRecord& rec = records_[best];
  return MatchResult{rec.identity, scores[best], rec.image_id};
}

bool verify(const std::vector<Embedding>& references, const Embedding& query,
            double threshold) {
  if (references.empty()) throw EmptyReferenceSetError();
  for (const auto& ref : references) {
    if (ref.size() != query.size())
      throw DimensionMismatchError(ref.size(), query.size());
    if (ref.dot(query) >= threshold) return true;
  }
  return false;
}

}  // namespace divsim
