#pragma once

#include <random>

#include "lsac/common.hpp"
#include "lsac/nn.hpp"

namespace lsac::dist_critic {
class CriticNet;
}

namespace lsac::policy {

/// Squashed diagonal-Gaussian actor. The trunk outputs per-dimension mean and
/// log-scale heads; log-scale is clamped to [-20, 2] before exponentiation.
class PolicyNet {
 public:
  PolicyNet(Index obs_dim, Index act_dim, const std::vector<Index>& hidden);

  Index obs_dim() const { return obs_dim_; }
  Index act_dim() const { return act_dim_; }
  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }

  void init(std::mt19937_64& rng) { net_.init(rng); }

  struct Sample {
    Matrix a;     // act_dim x k, in [-1,1]
    Matrix u;     // pre-squash
    Vector logp;  // k
  };

  /// Reparameterized draw a = tanh(mu + scale * eps) with the tanh
  /// log-density correction; eps is supplied so callers can replay noise.
  Sample sample_with_noise(const Matrix& states, const Matrix& eps) const;
  Sample sample(const Matrix& states, std::mt19937_64& rng) const;

  /// Evaluation-mode action tanh(mu), no noise.
  Matrix act_deterministic(const Matrix& states) const;

  /// mu and clamped log-scale rows for a batch of states.
  void heads(const Matrix& states, Matrix& mu, Matrix& log_scale,
             nn::ForwardCache* cache = nullptr) const;

 private:
  Index obs_dim_, act_dim_;
  nn::DenseNet net_;
};

/// Entropy temperature with the direct update rule and a positivity floor.
struct EntropyCoef {
  double alpha = 0.2;
  double target_entropy = 0.0;  // -act_dim by default, set at construction
  double lr = 3e-4;
};

/// alpha <- max(1e-6, alpha - lr * (mean(-logp) - target)).
void update_alpha(EntropyCoef& coef, const Vector& batch_logp);

struct PolicyGradient {
  Vector grad;   // d/dphi of mean(alpha*logp - Q)
  Vector logp;   // per-sample log-probabilities of the drawn actions
  double objective = 0.0;
};

/// Gradient of mean_j [alpha*log pi(a_j|s_j) - Q(s_j, a_j)] with a
/// reparameterized through the policy and the critic's mean head providing
/// dQ/da. `eps` fixes the noise (common random numbers).
PolicyGradient policy_gradient(const PolicyNet& policy,
                               const dist_critic::CriticNet& critic,
                               const Matrix& states, double alpha,
                               const Matrix& eps);

}  // namespace lsac::policy
