#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "divsim/embedding.hpp"
#include "divsim/world.hpp"

namespace divsim {

enum class AuxMode { kFixed, kRandom, kNone };

// Optional hook standing in for an image-style alignment loss. Returns the
// loss value and writes its gradient into `grad` (same size as w). The
// default hook is identically zero.
using StyleLoss =
    std::function<double(const Eigen::VectorXd& w, Eigen::VectorXd& grad)>;

struct ProtectionConfig {
  double alpha1 = 0.6;   // guide weight
  double alpha2 = 1.2;   // diversity weight
  double alpha3 = 0.5;   // style-proxy weight (default hook contributes 0)
  double alpha4 = 0.02;  // latent-displacement weight
  double delta = 0.2;    // guide margin
  int queue_capacity = 10;  // m
  double step_size = 0.01;  // lambda
  int steps = 60;           // S
  AuxMode aux_mode = AuxMode::kRandom;
  std::vector<int> substitute_extractors = {1, 2, 3};
  std::uint64_t seed = 0;
  bool use_adam = false;  // plain gradient descent by default
  std::string target_prompt = "natural makeup";  // report metadata only
  std::string source_prompt = "face";
  StyleLoss style_loss;  // empty -> zero loss
};

void validate_protection_config(const ProtectionConfig& cfg, const World& world);

// FIFO queue of recently generated protected embeddings, capacity m.
class DiversityQueue {
 public:
  explicit DiversityQueue(int capacity) : capacity_(capacity) {}

  void push(Embedding e);
  size_t size() const { return entries_.size(); }
  int capacity() const { return capacity_; }
  const std::deque<Embedding>& entries() const { return entries_; }

 private:
  std::deque<Embedding> entries_;
  int capacity_;
};

// --- Loss terms -----------------------------------------------------------
// All terms are functions of the raw latent w through the renderer embed();
// D values are averaged over the substitute extractor ensemble except the
// diversity term, which lives in the first substitute's feature space (that
// is where queue entries are stored).

double loss_adv(const Eigen::VectorXd& w, const Eigen::VectorXd& x_ee_latent,
                const std::vector<int>& substitutes, const World& world);
Eigen::VectorXd loss_adv_grad(const Eigen::VectorXd& w,
                              const Eigen::VectorXd& x_ee_latent,
                              const std::vector<int>& substitutes,
                              const World& world);

double loss_guide(const Eigen::VectorXd& w, const Eigen::VectorXd& aux_latent,
                  double delta, const std::vector<int>& substitutes,
                  const World& world);
Eigen::VectorXd loss_guide_grad(const Eigen::VectorXd& w,
                                const Eigen::VectorXd& aux_latent, double delta,
                                const std::vector<int>& substitutes,
                                const World& world);

double loss_div(const Eigen::VectorXd& w, const DiversityQueue& queue, int m,
                const std::vector<int>& substitutes, const World& world);
Eigen::VectorXd loss_div_grad(const Eigen::VectorXd& w, const DiversityQueue& queue,
                              int m, const std::vector<int>& substitutes,
                              const World& world);

double loss_latent(const Eigen::VectorXd& w, const Eigen::VectorXd& w_init);
Eigen::VectorXd loss_latent_grad(const Eigen::VectorXd& w,
                                 const Eigen::VectorXd& w_init);

struct LossContext {
  const World* world = nullptr;
  const ProtectionConfig* config = nullptr;
  Eigen::VectorXd x_ee_latent;
  std::optional<Eigen::VectorXd> aux_latent;  // empty when aux_mode == kNone
  const DiversityQueue* queue = nullptr;
  Eigen::VectorXd w_init;
};

double total_loss(const Eigen::VectorXd& w, const LossContext& ctx);
Eigen::VectorXd total_loss_grad(const Eigen::VectorXd& w, const LossContext& ctx);

// --- Optimizers -----------------------------------------------------------

struct ProtectResult {
  ImageRecord record;            // protected copy (latent = w_S, flag set)
  double latent_displacement = 0.0;  // |w_S - w_init|, visual-cost proxy
};

// One image: S gradient steps from w_0 = x_ee.latent, then FIFO-append the
// protected embedding (first substitute extractor) to the queue.
ProtectResult protect_image(const ImageRecord& x_ee, DiversityQueue& queue,
                            const std::vector<Embedding>& aux_pool,
                            const ProtectionConfig& config, const World& world,
                            std::optional<int> fixed_aux_index = std::nullopt);

// Sequential protection of one trackee's images, threading a single queue.
std::vector<ProtectResult> protect_set(const std::vector<ImageRecord>& trackee_images,
                                       const ProtectionConfig& config,
                                       const World& world);

enum class BaselineKind { kUntargeted, kFixedAux, kRandomAux };

// Baseline schemes, all reusing the same optimizer:
//   untargeted - pure adversarial ascent (alpha1..4 = 0)
//   fixed_aux  - alpha2 = 0, one auxiliary shared by every image
//   random_aux - alpha2 = 0, fresh uniform auxiliary per image
std::vector<ProtectResult> baseline_protect(BaselineKind kind,
                                            const std::vector<ImageRecord>& images,
                                            const ProtectionConfig& config,
                                            const World& world);

}  // namespace divsim
