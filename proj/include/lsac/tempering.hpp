#pragma once

#include <random>
#include <vector>

#include "lsac/asgld.hpp"
#include "lsac/buffers.hpp"
#include "lsac/dist_critic.hpp"
#include "lsac/policy.hpp"

namespace lsac::tempering {

enum class Sampler { kAsgld, kAdam };

/// n independently initialized Langevin critic chains with their Polyak
/// targets and per-chain clip states. No replica exchange; all chains share
/// one temperature.
struct CriticEnsemble {
  std::vector<dist_critic::CriticNet> critics;
  std::vector<dist_critic::CriticNet> targets;
  std::vector<asgld::ChainState> chains;
  std::vector<dist_critic::ClipState> clips;

  Index n() const { return static_cast<Index>(critics.size()); }
};

/// Chain i draws its init and noise streams from base_seed ^ i; targets start
/// as copies of their chains.
CriticEnsemble init_ensemble(Index n, std::uint64_t base_seed, Index obs_dim,
                             Index act_dim, const std::vector<Index>& hidden,
                             double eps_sigma = 1e-6, double clip_tau = 0.005,
                             double kappa_b = 1.0);

Index pick_chain(const CriticEnsemble& ensemble, std::mt19937_64& rng);

struct ChainReport {
  double loss = 0.0;
  double sigma_mean = 0.0;
  double grad_norm = 0.0;
};

/// One Alg.-2 update per chain on its own batch: targets, analytic gradient,
/// sampler step, clip-state tracking. Chains touch no shared state.
std::vector<ChainReport> update_ensemble(CriticEnsemble& ensemble,
                                         const std::vector<buffers::Batch>& batches,
                                         const policy::PolicyNet& target_policy,
                                         double alpha, double gamma,
                                         const asgld::AsgldConfig& cfg,
                                         Sampler sampler = Sampler::kAsgld,
                                         bool standard_mode = false);

}  // namespace lsac::tempering
