#include "lsac/policy.hpp"

#include <cmath>

#include "lsac/dist_critic.hpp"

namespace lsac::policy {

namespace {
constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;
constexpr double kHalfLog2Pi = 0.9189385332046727;
constexpr double kSquashEps = 1e-6;

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }
}  // namespace

PolicyNet::PolicyNet(Index obs_dim, Index act_dim, const std::vector<Index>& hidden)
    : obs_dim_(obs_dim), act_dim_(act_dim) {
  std::vector<Index> dims;
  dims.push_back(obs_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2 * act_dim);
  net_ = nn::DenseNet(dims);
}

void PolicyNet::heads(const Matrix& states, Matrix& mu, Matrix& log_scale,
                      nn::ForwardCache* cache) const {
  const Matrix out = net_.forward(states, cache);
  mu = out.topRows(act_dim_);
  log_scale = out.bottomRows(act_dim_).unaryExpr(
      [](double r) { return clamp(r, kLogStdMin, kLogStdMax); });
}

PolicyNet::Sample PolicyNet::sample_with_noise(const Matrix& states,
                                               const Matrix& eps) const {
  if (eps.rows() != act_dim_ || eps.cols() != states.cols())
    throw ShapeError("PolicyNet: eps shape must be act_dim x batch");
  Matrix mu, log_scale;
  heads(states, mu, log_scale);
  const Matrix scale = log_scale.array().exp();
  Sample s;
  s.u = mu + scale.cwiseProduct(eps);
  s.a = s.u.array().tanh();
  s.logp = Vector::Zero(states.cols());
  for (Index j = 0; j < states.cols(); ++j)
    for (Index d = 0; d < act_dim_; ++d) {
      const double t = s.a(d, j);
      s.logp[j] += -kHalfLog2Pi - log_scale(d, j) - 0.5 * eps(d, j) * eps(d, j) -
                   std::log(1.0 - t * t + kSquashEps);
    }
  return s;
}

PolicyNet::Sample PolicyNet::sample(const Matrix& states, std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix eps(act_dim_, states.cols());
  for (Index j = 0; j < eps.cols(); ++j)
    for (Index d = 0; d < act_dim_; ++d) eps(d, j) = normal(rng);
  return sample_with_noise(states, eps);
}

Matrix PolicyNet::act_deterministic(const Matrix& states) const {
  Matrix mu, log_scale;
  heads(states, mu, log_scale);
  return mu.array().tanh();
}

void update_alpha(EntropyCoef& coef, const Vector& batch_logp) {
  const double entropy = -batch_logp.mean();
  coef.alpha = std::max(1e-6, coef.alpha - coef.lr * (entropy - coef.target_entropy));
}

PolicyGradient policy_gradient(const PolicyNet& policy,
                               const dist_critic::CriticNet& critic,
                               const Matrix& states, double alpha,
                               const Matrix& eps) {
  const Index d = policy.act_dim(), k = states.cols();
  nn::ForwardCache cache;
  Matrix mu, log_scale;
  {
    // heads() clamps; redo the forward here to keep the cache and the raw
    // head values (the clamp gate needs them).
    const Matrix out = policy.net().forward(states, &cache);
    mu = out.topRows(d);
    log_scale = out.bottomRows(d).unaryExpr(
        [](double r) { return clamp(r, kLogStdMin, kLogStdMax); });
  }
  const Matrix raw = cache.post.back().bottomRows(d);
  const Matrix scale = log_scale.array().exp();
  const Matrix u = mu + scale.cwiseProduct(eps);
  const Matrix a = u.array().tanh();

  const Matrix dq_da = critic.q_action_grad(states, a);

  PolicyGradient out;
  out.logp = Vector::Zero(k);
  Matrix d_heads = Matrix::Zero(2 * d, k);
  const double inv_k = 1.0 / static_cast<double>(k);
  double q_term = 0.0;
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < d; ++i) {
      const double t = a(i, j);
      const double sech2 = 1.0 - t * t;
      const double corr = 1.0 - t * t + kSquashEps;
      out.logp[j] += -kHalfLog2Pi - log_scale(i, j) - 0.5 * eps(i, j) * eps(i, j) -
                     std::log(corr);
      // d logp / du through the squash correction only; the Gaussian density
      // term is constant in u under reparameterization.
      const double dlogp_du = 2.0 * t * sech2 / corr;
      const double du_dmu = 1.0;
      const double du_dls = scale(i, j) * eps(i, j);
      const double dneg_q_du = -dq_da(i, j) * sech2;
      const bool clamped = raw(i, j) < kLogStdMin || raw(i, j) > kLogStdMax;
      const double dlogp_dls = -1.0 + dlogp_du * du_dls;
      d_heads(i, j) = (alpha * dlogp_du * du_dmu + dneg_q_du * du_dmu) * inv_k;
      d_heads(d + i, j) =
          clamped ? 0.0 : (alpha * dlogp_dls + dneg_q_du * du_dls) * inv_k;
    }
  }
  {
    // Objective value for diagnostics: mean(alpha*logp - Q).
    const auto val = critic.value_dist(states, a);
    q_term = val.q.mean();
  }
  out.objective = alpha * out.logp.mean() - q_term;
  out.grad = policy.net().backward(cache, d_heads);
  return out;
}

}  // namespace lsac::policy
