#pragma once

#include <random>

#include "lsac/buffers.hpp"
#include "lsac/common.hpp"
#include "lsac/nn.hpp"
#include "lsac/policy.hpp"

namespace lsac::dist_critic {

/// Gaussian distributional critic Z(.|s,a) = N(Q, sigma^2). One trunk over
/// the concatenated (s, a) with two scalar heads: Q and a raw scale passed
/// through softplus plus a floor.
class CriticNet {
 public:
  CriticNet(Index obs_dim, Index act_dim, const std::vector<Index>& hidden,
            double eps_sigma = 1e-6);

  Index obs_dim() const { return obs_dim_; }
  Index act_dim() const { return act_dim_; }
  double eps_sigma() const { return eps_sigma_; }
  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }

  void init(std::mt19937_64& rng) { net_.init(rng); }

  struct Value {
    Vector q;      // k
    Vector sigma;  // k, = softplus(raw) + eps_sigma
    Vector raw;    // k, pre-softplus head
  };

  Value value_dist(const Matrix& states, const Matrix& actions,
                   nn::ForwardCache* cache = nullptr) const;

  /// Q-head input gradient w.r.t. the actions of a (s,a) batch, act_dim x k.
  Matrix q_action_grad(const Matrix& states, const Matrix& actions) const;

 private:
  Index obs_dim_, act_dim_;
  double eps_sigma_;
  nn::DenseNet net_;
};

/// Polyak-tracked clipping boundary b and gradient scalar omega.
struct ClipState {
  double b = 1.0;
  double omega = 1.0;
  double tau = 0.005;
  double kappa_b = 1.0;
};

struct CriticTargets {
  Vector y_q;
  Vector y_z;
  Matrix a_next;
  Vector logp_next;
};

/// y_Q = r + (1-d)*gamma*(Qbar(s',a') - alpha*logpi(a'|s')) with a' drawn
/// from the target policy; y_Z replaces Qbar by a sample of N(Qbar, sigmabar^2).
CriticTargets bellman_targets(const CriticNet& target_critic,
                              const policy::PolicyNet& target_policy,
                              const buffers::Batch& batch, double alpha,
                              double gamma, std::mt19937_64& rng);

inline double clip_target(double y_z, double q, double b) {
  const double lo = q - b, hi = q + b;
  return y_z < lo ? lo : (y_z > hi ? hi : y_z);
}

struct CriticGradient {
  Vector grad;
  double loss = 0.0;        // Gaussian NLL of y_Q under N(Q, sigma^2)
  double sigma_mean = 0.0;
  double sigma_sq_mean = 0.0;
};

/// The analytic mean/variance gradient decomposition, assembled in one
/// backward pass:
///   omega * mean_j [ -(y_Q - Q)/(sigma^2 + eps) * dQ
///                    - ((clip_b(y_Z) - Q)^2 - sigma^2)/(sigma^3 + eps) * dsigma ].
/// With `standard_mode` the scale head is ignored and the gradient is that of
/// 1/2 * mean (y_Q - Q)^2 (plain critic ablation), omega not applied.
CriticGradient critic_gradient(const CriticNet& critic, const buffers::Batch& batch,
                               const CriticTargets& targets, const ClipState& clip,
                               bool standard_mode = false);

/// b <- tau*b + (1-tau)*kappa_b*E[sigma]; omega <- tau*omega + (1-tau)*E[sigma^2].
void update_clip_state(ClipState& clip, double sigma_mean, double sigma_sq_mean);

}  // namespace lsac::dist_critic
