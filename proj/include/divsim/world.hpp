#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "divsim/embedding.hpp"

namespace divsim {

struct ImageRecord {
  int image_id = 0;
  int identity = 0;
  Eigen::VectorXd latent;  // "true" pre-extractor representation, unit norm
  bool protected_flag = false;
};

// Synthetic feature extractor: orthogonal transform plus a small fixed
// perturbation matrix. The perturbation is baked into the map (not resampled
// per call), so embed() stays smooth and differentiable in the latent.
struct Extractor {
  int extractor_id = 0;
  Eigen::MatrixXd transform;  // orthogonal, d x d
  Eigen::MatrixXd noise;      // raw gaussian matrix, d x d
  double noise_scale = 0.0;
  std::uint64_t noise_seed = 0;

  // transform + noise_scale * noise / sqrt(d)
  Eigen::MatrixXd effective() const;
};

struct WorldConfig {
  int n_identities = 500;
  int images_per_identity = 20;
  // Expected Euclidean norm of the per-image latent perturbation around the
  // identity mean (the per-coordinate gaussian is scaled by 1/sqrt(d)).
  // Calibrated once on the seeded benchmark world so that clean dynamic
  // tracking saturates while protection leaves a partial static residue.
  double intra_sigma = 1.35;
  int n_extractors = 4;
  double extractor_noise = 0.05;
  int aux_pool_size = 2000;
  int dims = 128;
  std::uint64_t seed = 1;
};

struct World {
  WorldConfig config;
  std::vector<Eigen::VectorXd> identity_means;  // unit vectors, index = identity
  std::vector<ImageRecord> images;
  std::vector<Extractor> extractors;
  std::vector<Embedding> aux_pool;  // unit latents of auxiliary identities

  bool operator==(const World& other) const;
};

World generate_world(const WorldConfig& cfg);

Embedding embed(const Extractor& e, const Eigen::VectorXd& latent);

// Vector-Jacobian product of embed at `latent`: returns J^T * cotangent.
Eigen::VectorXd embed_pullback(const Extractor& e, const Eigen::VectorXd& latent,
                               const Eigen::VectorXd& cotangent);

// Plain-text serialization. Image records are one per line:
//   identity_id,image_id,protected_flag,v1,...,vd
// Lines starting with '!' carry world metadata (dims, seed, identity means,
// extractors, aux pool) so a generated world round-trips exactly. A file of
// bare image records imports as a world with a single identity extractor.
void export_world(const World& w, const std::string& path);
World import_world(const std::string& path);

// Bare record lines only (no metadata), e.g. for exporting protected sets.
void export_records(const std::vector<ImageRecord>& records,
                    const std::string& path);

}  // namespace divsim
