#include "lsac/asgld.hpp"

#include <cmath>

namespace lsac::asgld {

double step_size(const AsgldConfig& cfg, std::int64_t t) {
  if (t < 0) throw BoundsError("step_size: negative step");
  if (t < cfg.warmup_steps) return cfg.eta_init;
  const std::int64_t into = t - cfg.warmup_steps;
  if (into >= cfg.anneal_steps) return cfg.eta_final;
  const double frac = static_cast<double>(into) / static_cast<double>(cfg.anneal_steps);
  return cfg.eta_init + frac * (cfg.eta_final - cfg.eta_init);
}

Vector clip_to_global_norm(const Vector& d, double c) {
  if (c <= 0.0) throw BoundsError("clip_to_global_norm: c must be positive");
  const double norm = d.norm();
  if (norm <= c || norm == 0.0) return d;
  return d * (c / norm);
}

void asgld_step(Vector& params, const Vector& grad, ChainState& chain,
                const AsgldConfig& cfg) {
  if (params.size() != grad.size() || params.size() != chain.m.size())
    throw ShapeError("asgld_step: size mismatch");
  if (!grad.allFinite())
    throw ChainPoisonedError("asgld_step: non-finite gradient at chain step " +
                             std::to_string(chain.step));

  chain.m = cfg.alpha1 * chain.m + (1.0 - cfg.alpha1) * grad;
  chain.v = cfg.alpha2 * chain.v + (1.0 - cfg.alpha2) * grad.cwiseProduct(grad);
  const Vector zeta =
      chain.m.array() / (chain.v.array() + cfg.lambda).sqrt();
  const Vector d = clip_to_global_norm(grad + cfg.a * zeta, cfg.clip_norm);

  const double eta = step_size(cfg, chain.step);
  params -= eta * d;
  if (std::isfinite(cfg.beta_q)) {
    const double noise_std = std::sqrt(2.0 * eta / cfg.beta_q);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < params.size(); ++i) params[i] += noise_std * normal(chain.rng);
  }
  ++chain.step;
}

void adam_arm_step(Vector& params, const Vector& grad, ChainState& chain,
                   const AsgldConfig& cfg) {
  if (params.size() != grad.size() || params.size() != chain.m.size())
    throw ShapeError("adam_arm_step: size mismatch");
  if (!grad.allFinite())
    throw ChainPoisonedError("adam_arm_step: non-finite gradient at chain step " +
                             std::to_string(chain.step));
  const Vector g = clip_to_global_norm(grad, cfg.clip_norm);
  chain.m = cfg.alpha1 * chain.m + (1.0 - cfg.alpha1) * g;
  chain.v = cfg.alpha2 * chain.v + (1.0 - cfg.alpha2) * g.cwiseProduct(g);
  const double eta = step_size(cfg, chain.step);
  const double c1 = 1.0 - std::pow(cfg.alpha1, static_cast<double>(chain.step + 1));
  const double c2 = 1.0 - std::pow(cfg.alpha2, static_cast<double>(chain.step + 1));
  params.array() -=
      eta * (chain.m.array() / c1) / ((chain.v.array() / c2).sqrt() + cfg.lambda);
  ++chain.step;
}

}  // namespace lsac::asgld
