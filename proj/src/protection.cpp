#include "divsim/protection.hpp"

#include <cmath>

#include "divsim/errors.hpp"
#include "divsim/rng.hpp"

namespace divsim {

void validate_protection_config(const ProtectionConfig& cfg, const World& world) {
  if (cfg.alpha1 < 0 || cfg.alpha2 < 0 || cfg.alpha3 < 0 || cfg.alpha4 < 0)
    throw InvalidConfigError("loss weights must be >= 0");
  if (cfg.delta < 0) throw InvalidConfigError("delta must be >= 0");
  if (cfg.queue_capacity < 1) throw InvalidConfigError("queue capacity must be >= 1");
  if (cfg.step_size <= 0) throw InvalidConfigError("step_size must be > 0");
  if (cfg.steps < 0) throw InvalidConfigError("steps must be >= 0");
  if (cfg.substitute_extractors.empty())
    throw InvalidConfigError("substitute extractor list must be non-empty");
  for (int id : cfg.substitute_extractors)
    if (id < 0 || id >= static_cast<int>(world.extractors.size()))
      throw InvalidConfigError("substitute extractor id out of range");
}

void DiversityQueue::push(Embedding e) {
  entries_.push_back(std::move(e));
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

double loss_adv(const Eigen::VectorXd& w, const Eigen::VectorXd& x_ee_latent,
                const std::vector<int>& substitutes, const World& world) {
  double sum = 0.0;
  for (int id : substitutes) {
    const Extractor& e = world.extractors[id];
    sum += -dissimilarity(embed(e, w), embed(e, x_ee_latent));
  }
  return sum / static_cast<double>(substitutes.size());
}

Eigen::VectorXd loss_adv_grad(const Eigen::VectorXd& w,
                              const Eigen::VectorXd& x_ee_latent,
                              const std::vector<int>& substitutes,
                              const World& world) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
  for (int id : substitutes) {
    const Extractor& e = world.extractors[id];
    g += embed_pullback(e, w, embed(e, x_ee_latent));
  }
  return g / static_cast<double>(substitutes.size());
}

double loss_guide(const Eigen::VectorXd& w, const Eigen::VectorXd& aux_latent,
                  double delta, const std::vector<int>& substitutes,
                  const World& world) {
  double sum = 0.0;
  for (int id : substitutes) {
    const Extractor& e = world.extractors[id];
    sum += std::max(0.0, dissimilarity(embed(e, w), embed(e, aux_latent)) - delta);
  }
  return sum / static_cast<double>(substitutes.size());
}

Eigen::VectorXd loss_guide_grad(const Eigen::VectorXd& w,
                                const Eigen::VectorXd& aux_latent, double delta,
                                const std::vector<int>& substitutes,
                                const World& world) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
  for (int id : substitutes) {
    const Extractor& e = world.extractors[id];
    const Embedding target = embed(e, aux_latent);
    if (dissimilarity(embed(e, w), target) - delta > 0)
      g -= embed_pullback(e, w, target);
  }
  return g / static_cast<double>(substitutes.size());
}

double loss_div(const Eigen::VectorXd& w, const DiversityQueue& queue, int m,
                const std::vector<int>& substitutes, const World& world) {
  if (queue.size() == 0) return 0.0;
  const Extractor& e = world.extractors[substitutes.front()];
  const Embedding z = embed(e, w);
  double sum = 0.0;
  for (const auto& q : queue.entries()) sum += dissimilarity(z, q);
  // Literal 1/m divisor with the fixed capacity, even when |Q| < m.
  return -sum / static_cast<double>(m);
}

Eigen::VectorXd loss_div_grad(const Eigen::VectorXd& w, const DiversityQueue& queue,
                              int m, const std::vector<int>& substitutes,
                              const World& world) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
  if (queue.size() == 0) return g;
  const Extractor& e = world.extractors[substitutes.front()];
  for (const auto& q : queue.entries()) g += embed_pullback(e, w, q);
  return g / static_cast<double>(m);
}

double loss_latent(const Eigen::VectorXd& w, const Eigen::VectorXd& w_init) {
  check_same_dim(w, w_init);
  return (w - w_init).norm();
}

Eigen::VectorXd loss_latent_grad(const Eigen::VectorXd& w,
                                 const Eigen::VectorXd& w_init) {
  check_same_dim(w, w_init);
  const Eigen::VectorXd diff = w - w_init;
  const double n = diff.norm();
  if (n < kZeroNormEps) return Eigen::VectorXd::Zero(w.size());
  return diff / n;
}

double total_loss(const Eigen::VectorXd& w, const LossContext& ctx) {
  const ProtectionConfig& cfg = *ctx.config;
  const std::vector<int>& subs = cfg.substitute_extractors;
  double loss = loss_adv(w, ctx.x_ee_latent, subs, *ctx.world);
  if (ctx.aux_latent && cfg.alpha1 > 0)
    loss += cfg.alpha1 * loss_guide(w, *ctx.aux_latent, cfg.delta, subs, *ctx.world);
  if (cfg.alpha2 > 0)
    loss += cfg.alpha2 *
            loss_div(w, *ctx.queue, cfg.queue_capacity, subs, *ctx.world);
  if (cfg.alpha3 > 0 && cfg.style_loss) {
    Eigen::VectorXd unused = Eigen::VectorXd::Zero(w.size());
    loss += cfg.alpha3 * cfg.style_loss(w, unused);
  }
  if (cfg.alpha4 > 0) loss += cfg.alpha4 * loss_latent(w, ctx.w_init);
  return loss;
}

Eigen::VectorXd total_loss_grad(const Eigen::VectorXd& w, const LossContext& ctx) {
  const ProtectionConfig& cfg = *ctx.config;
  const std::vector<int>& subs = cfg.substitute_extractors;
  Eigen::VectorXd g = loss_adv_grad(w, ctx.x_ee_latent, subs, *ctx.world);
  if (ctx.aux_latent && cfg.alpha1 > 0)
    g += cfg.alpha1 *
         loss_guide_grad(w, *ctx.aux_latent, cfg.delta, subs, *ctx.world);
  if (cfg.alpha2 > 0)
    g += cfg.alpha2 *
         loss_div_grad(w, *ctx.queue, cfg.queue_capacity, subs, *ctx.world);
  if (cfg.alpha3 > 0 && cfg.style_loss) {
    Eigen::VectorXd sg = Eigen::VectorXd::Zero(w.size());
    cfg.style_loss(w, sg);
    g += cfg.alpha3 * sg;
  }
  if (cfg.alpha4 > 0) g += cfg.alpha4 * loss_latent_grad(w, ctx.w_init);
  return g;
}

ProtectResult protect_image(const ImageRecord& x_ee, DiversityQueue& queue,
                            const std::vector<Embedding>& aux_pool,
                            const ProtectionConfig& config, const World& world,
                            std::optional<int> fixed_aux_index) {
  validate_protection_config(config, world);

  LossContext ctx;
  ctx.world = &world;
  ctx.config = &config;
  ctx.x_ee_latent = x_ee.latent;
  ctx.queue = &queue;
  ctx.w_init = x_ee.latent;

  if (config.aux_mode != AuxMode::kNone) {
    if (aux_pool.empty()) throw EmptyAuxPoolError();
    int idx;
    if (config.aux_mode == AuxMode::kFixed) {
      if (fixed_aux_index) {
        idx = *fixed_aux_index;
      } else {
        auto rng = make_rng(derive_seed(config.seed, {hash_string("fixed_aux")}));
        idx = static_cast<int>(
            std::uniform_int_distribution<size_t>(0, aux_pool.size() - 1)(rng));
      }
    } else {
      auto rng = make_rng(derive_seed(
          config.seed, {hash_string("aux"), static_cast<std::uint64_t>(x_ee.image_id)}));
      idx = static_cast<int>(
          std::uniform_int_distribution<size_t>(0, aux_pool.size() - 1)(rng));
    }
    ctx.aux_latent = aux_pool[idx];
  }

  Eigen::VectorXd w = x_ee.latent;
  if (config.steps > 0) {
    // Deterministic symmetry-breaking jitter: w_0 sits exactly at the
    // critical point of the self-dissimilarity term, where its gradient
    // vanishes. Mirrors the imperfect inversion of the initial latent.
    auto rng = make_rng(derive_seed(
        config.seed,
        {hash_string("jitter"), static_cast<std::uint64_t>(x_ee.image_id)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1e-3 / std::sqrt(static_cast<double>(w.size()));
    for (int i = 0; i < w.size(); ++i) w[i] += scale * normal(rng);
  }
  if (config.use_adam) {
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(w.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(w.size());
    for (int s = 0; s < config.steps; ++s) {
      const Eigen::VectorXd g = total_loss_grad(w, ctx);
      m1 = beta1 * m1 + (1 - beta1) * g;
      m2 = beta2 * m2 + (1 - beta2) * g.cwiseProduct(g);
      const double c1 = 1 - std::pow(beta1, s + 1);
      const double c2 = 1 - std::pow(beta2, s + 1);
      w -= config.step_size *
           ((m1 / c1).array() / ((m2 / c2).array().sqrt() + eps)).matrix();
    }
  } else {
    for (int s = 0; s < config.steps; ++s)
      w -= config.step_size * total_loss_grad(w, ctx);
  }

  ProtectResult result;
  result.record = x_ee;
  result.record.latent = w;
  result.record.protected_flag = true;
  result.latent_displacement = (w - x_ee.latent).norm();

  queue.push(embed(world.extractors[config.substitute_extractors.front()], w));
  return result;
}

std::vector<ProtectResult> protect_set(const std::vector<ImageRecord>& trackee_images,
                                       const ProtectionConfig& config,
                                       const World& world) {
  validate_protection_config(config, world);
  for (size_t i = 1; i < trackee_images.size(); ++i)
    if (trackee_images[i].identity != trackee_images[0].identity)
      throw InvalidConfigError("protect_set requires a single trackee identity");

  std::optional<int> fixed_idx;
  if (config.aux_mode == AuxMode::kFixed) {
    if (world.aux_pool.empty()) throw EmptyAuxPoolError();
    auto rng = make_rng(derive_seed(config.seed, {hash_string("fixed_aux")}));
    fixed_idx = static_cast<int>(std::uniform_int_distribution<size_t>(
        0, world.aux_pool.size() - 1)(rng));
  }

  DiversityQueue queue(config.queue_capacity);
  std::vector<ProtectResult> out;
  out.reserve(trackee_images.size());
  for (const auto& img : trackee_images)
    out.push_back(protect_image(img, queue, world.aux_pool, config, world, fixed_idx));
  return out;
}

std::vector<ProtectResult> baseline_protect(BaselineKind kind,
                                            const std::vector<ImageRecord>& images,
                                            const ProtectionConfig& config,
                                            const World& world) {
  ProtectionConfig cfg = config;
  switch (kind) {
    case BaselineKind::kUntargeted:
      cfg.alpha1 = cfg.alpha2 = cfg.alpha3 = cfg.alpha4 = 0.0;
      cfg.aux_mode = AuxMode::kNone;
      break;
    case BaselineKind::kFixedAux:
      cfg.alpha2 = 0.0;
      cfg.aux_mode = AuxMode::kFixed;
      break;
    case BaselineKind::kRandomAux:
      cfg.alpha2 = 0.0;
      cfg.aux_mode = AuxMode::kRandom;
      break;
  }
  return protect_set(images, cfg, world);
}

}  // namespace divsim
