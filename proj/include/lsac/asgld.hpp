#pragma once

#include <cstdint>
#include <random>

#include "lsac/common.hpp"

namespace lsac::asgld {

struct AsgldConfig {
  double eta_init = 1e-3;
  double eta_final = 1e-4;
  std::int64_t warmup_steps = 5000;
  std::int64_t anneal_steps = 50000;
  double a = 0.1;          // adaptive bias factor
  double beta_q = 1e8;     // inverse temperature; +inf disables noise
  double alpha1 = 0.9;
  double alpha2 = 0.999;
  double lambda = 1e-8;
  double clip_norm = 0.7;
};

/// Moments, step counter and noise stream of one Langevin chain. The chain's
/// parameters live in its critic net; steps operate on the flat vector.
struct ChainState {
  Vector m;
  Vector v;
  std::int64_t step = 0;
  std::mt19937_64 rng;

  ChainState() = default;
  ChainState(Index n, std::uint64_t seed) : m(Vector::Zero(n)), v(Vector::Zero(n)), rng(seed) {}
};

/// eta_init while t < warmup, linear anneal to eta_final over anneal_steps,
/// constant after.
double step_size(const AsgldConfig& cfg, std::int64_t t);

Vector clip_to_global_norm(const Vector& d, double c);

/// One adaptive SGLD update in place:
///   m <- a1*m + (1-a1)*g;  v <- a2*v + (1-a2)*g.^2  (no bias correction)
///   zeta = m ./ sqrt(v + lambda)
///   d = clip_to_global_norm(g + a*zeta, c)
///   params <- params - eta*d + sqrt(2*eta/beta_q)*eps,  eps ~ N(0, I)
/// A non-finite gradient poisons the chain (throws ChainPoisonedError).
void asgld_step(Vector& params, const Vector& grad, ChainState& chain,
                const AsgldConfig& cfg);

/// Plain-Adam ablation arm sharing the chain's moments and step schedule:
/// clipped gradient, bias-corrected Adam update at lr = step_size(t), no noise.
void adam_arm_step(Vector& params, const Vector& grad, ChainState& chain,
                   const AsgldConfig& cfg);

}  // namespace lsac::asgld
