#include "lsac/tempering.hpp"

namespace lsac::tempering {

CriticEnsemble init_ensemble(Index n, std::uint64_t base_seed, Index obs_dim,
                             Index act_dim, const std::vector<Index>& hidden,
                             double eps_sigma, double clip_tau, double kappa_b) {
  if (n < 1) throw BoundsError("init_ensemble: need at least one chain");
  CriticEnsemble e;
  e.critics.reserve(n);
  e.targets.reserve(n);
  e.chains.reserve(n);
  e.clips.reserve(n);
  for (Index i = 0; i < n; ++i) {
    const std::uint64_t chain_seed = base_seed ^ static_cast<std::uint64_t>(i);
    dist_critic::CriticNet critic(obs_dim, act_dim, hidden, eps_sigma);
    std::mt19937_64 init_rng(split_seed(chain_seed, 0));
    critic.init(init_rng);
    e.targets.push_back(critic);  // target starts as a copy
    e.chains.emplace_back(critic.net().param_count(), split_seed(chain_seed, 1));
    e.critics.push_back(std::move(critic));
    dist_critic::ClipState clip;
    clip.tau = clip_tau;
    clip.kappa_b = kappa_b;
    e.clips.push_back(clip);
  }
  return e;
}

Index pick_chain(const CriticEnsemble& ensemble, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> pick(0, ensemble.n() - 1);
  return pick(rng);
}

std::vector<ChainReport> update_ensemble(CriticEnsemble& ensemble,
                                         const std::vector<buffers::Batch>& batches,
                                         const policy::PolicyNet& target_policy,
                                         double alpha, double gamma,
                                         const asgld::AsgldConfig& cfg,
                                         Sampler sampler, bool standard_mode) {
  if (static_cast<Index>(batches.size()) != ensemble.n())
    throw ShapeError("update_ensemble: need exactly one batch per chain");
  std::vector<ChainReport> reports(batches.size());
  for (Index i = 0; i < ensemble.n(); ++i) {
    auto& chain = ensemble.chains[i];
    const auto targets = dist_critic::bellman_targets(
        ensemble.targets[i], target_policy, batches[i], alpha, gamma, chain.rng);
    const auto cg = dist_critic::critic_gradient(ensemble.critics[i], batches[i],
                                                 targets, ensemble.clips[i],
                                                 standard_mode);
    Vector params = ensemble.critics[i].net().params();
    if (sampler == Sampler::kAsgld)
      asgld::asgld_step(params, cg.grad, chain, cfg);
    else
      asgld::adam_arm_step(params, cg.grad, chain, cfg);
    ensemble.critics[i].net().set_params(params);
    if (!standard_mode)
      dist_critic::update_clip_state(ensemble.clips[i], cg.sigma_mean, cg.sigma_sq_mean);
    reports[i] = {cg.loss, cg.sigma_mean, cg.grad.norm()};
  }
  return reports;
}

}  // namespace lsac::tempering
