#include "lsac/dist_critic.hpp"

#include <cmath>

namespace lsac::dist_critic {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))
}

CriticNet::CriticNet(Index obs_dim, Index act_dim, const std::vector<Index>& hidden,
                     double eps_sigma)
    : obs_dim_(obs_dim), act_dim_(act_dim), eps_sigma_(eps_sigma) {
  std::vector<Index> dims;
  dims.push_back(obs_dim + act_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2);
  net_ = nn::DenseNet(dims);
}

CriticNet::Value CriticNet::value_dist(const Matrix& states, const Matrix& actions,
                                       nn::ForwardCache* cache) const {
  if (states.rows() != obs_dim_ || actions.rows() != act_dim_ ||
      states.cols() != actions.cols())
    throw ShapeError("CriticNet: (s,a) batch shape mismatch");
  Matrix input(obs_dim_ + act_dim_, states.cols());
  input << states, actions;
  const Matrix out = net_.forward(input, cache);
  Value v;
  v.q = out.row(0);
  v.raw = out.row(1);
  v.sigma = v.raw.unaryExpr([this](double r) { return nn::softplus(r) + eps_sigma_; });
  return v;
}

Matrix CriticNet::q_action_grad(const Matrix& states, const Matrix& actions) const {
  nn::ForwardCache cache;
  value_dist(states, actions, &cache);
  Matrix d_out = Matrix::Zero(2, states.cols());
  d_out.row(0).setOnes();
  Matrix d_input;
  net_.backward(cache, d_out, &d_input);
  return d_input.bottomRows(act_dim_);
}

CriticTargets bellman_targets(const CriticNet& target_critic,
                              const policy::PolicyNet& target_policy,
                              const buffers::Batch& batch, double alpha,
                              double gamma, std::mt19937_64& rng) {
  if (alpha < 0.0) throw BoundsError("bellman_targets: alpha must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw BoundsError("bellman_targets: gamma must lie in (0,1)");
  const auto next = target_policy.sample(batch.s_next, rng);
  const auto val = target_critic.value_dist(batch.s_next, next.a);

  std::normal_distribution<double> normal(0.0, 1.0);
  CriticTargets t;
  t.a_next = next.a;
  t.logp_next = next.logp;
  const Index k = batch.size();
  t.y_q.resize(k);
  t.y_z.resize(k);
  for (Index j = 0; j < k; ++j) {
    const double cont = 1.0 - batch.done[j];
    const double soft_q = val.q[j] - alpha * next.logp[j];
    const double z = val.q[j] + val.sigma[j] * normal(rng);
    t.y_q[j] = batch.r[j] + cont * gamma * soft_q;
    t.y_z[j] = batch.r[j] + cont * gamma * (z - alpha * next.logp[j]);
  }
  return t;
}

CriticGradient critic_gradient(const CriticNet& critic, const buffers::Batch& batch,
                               const CriticTargets& targets, const ClipState& clip,
                               bool standard_mode) {
  nn::ForwardCache cache;
  const auto val = critic.value_dist(batch.s, batch.a, &cache);
  const Index k = batch.size();
  if (targets.y_q.size() != k || targets.y_z.size() != k)
    throw ShapeError("critic_gradient: target batch size mismatch");

  const double eps = critic.eps_sigma();
  const double inv_k = 1.0 / static_cast<double>(k);
  Matrix d_out(2, k);
  CriticGradient out;
  for (Index j = 0; j < k; ++j) {
    const double q = val.q[j], sig = val.sigma[j];
    const double rq = targets.y_q[j] - q;
    if (standard_mode) {
      d_out(0, j) = -rq * inv_k;
      d_out(1, j) = 0.0;
      out.loss += 0.5 * rq * rq * inv_k;
    } else {
      const double yc = clip_target(targets.y_z[j], q, clip.b);
      const double rv = (yc - q) * (yc - q) - sig * sig;
      d_out(0, j) = -clip.omega * rq / (sig * sig + eps) * inv_k;
      d_out(1, j) = -clip.omega * rv / (sig * sig * sig + eps) *
                    nn::softplus_grad(val.raw[j]) * inv_k;
      out.loss += (0.5 * rq * rq / (sig * sig) + std::log(sig) + kLogSqrt2Pi) * inv_k;
    }
    out.sigma_mean += sig * inv_k;
    out.sigma_sq_mean += sig * sig * inv_k;
  }
  out.grad = critic.net().backward(cache, d_out);
  return out;
}

void update_clip_state(ClipState& clip, double sigma_mean, double sigma_sq_mean) {
  if (!std::isfinite(sigma_mean) || !std::isfinite(sigma_sq_mean))
    throw ContractError("update_clip_state: non-finite sigma statistics");
  clip.b = clip.tau * clip.b + (1.0 - clip.tau) * clip.kappa_b * sigma_mean;
  clip.omega = clip.tau * clip.omega + (1.0 - clip.tau) * sigma_sq_mean;
}

}  // namespace lsac::dist_critic
