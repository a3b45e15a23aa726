#include <doctest.h>

#include <cmath>
#include <random>

#include "lsac/dist_critic.hpp"
#include "oracles.hpp"

using namespace lsac;
using oracles::finite_diff_grad;
using oracles::rel_err;

namespace {

Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

buffers::Batch random_batch(Index obs_dim, Index act_dim, Index k,
                            std::mt19937_64& rng, double done_rate = 0.25) {
  buffers::Batch b;
  b.s = random_matrix(obs_dim, k, rng);
  b.a = random_matrix(act_dim, k, rng).array().tanh();
  b.r = random_matrix(1, k, rng).row(0);
  b.s_next = random_matrix(obs_dim, k, rng);
  b.done = Vector::Zero(k);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Index j = 0; j < k; ++j) b.done[j] = u(rng) < done_rate ? 1.0 : 0.0;
  b.replay_count = k;
  return b;
}

/// Constant critic: Q = q0 and raw scale = raw0 for every input.
dist_critic::CriticNet const_critic(Index obs_dim, Index act_dim, double q0,
                                    double raw0, double eps_sigma = 1e-6) {
  dist_critic::CriticNet critic(obs_dim, act_dim, {}, eps_sigma);
  Vector p = Vector::Zero(critic.net().param_count());
  const auto& b = critic.net().manifest().find("b0");
  p[b.offset] = q0;
  p[b.offset + 1] = raw0;
  critic.net().set_params(p);
  return critic;
}

/// Gaussian NLL of frozen targets under the critic's (Q, sigma): the
/// NLL-equivalence comparison function. y_var is pre-clipped by the caller and
/// held constant.
double frozen_nll(const dist_critic::CriticNet& critic, const buffers::Batch& batch,
                  const Vector& y_mean, const Vector& y_var_clipped) {
  const auto v = critic.value_dist(batch.s, batch.a);
  double acc = 0.0;
  for (Index j = 0; j < batch.size(); ++j) {
    const double q = v.q[j], s = v.sigma[j];
    acc += (y_mean[j] - q) * (y_mean[j] - q) / (2.0 * s * s) + std::log(s) +
           0.5 * std::log(2.0 * 3.14159265358979323846);
    (void)y_var_clipped;
  }
  return acc / static_cast<double>(batch.size());
}

}  // namespace

TEST_SUITE("dist_critic") {

TEST_CASE("constant net: sigma = softplus(0) + eps for all inputs") {
  const auto critic = const_critic(3, 1, 0.0, 0.0);
  std::mt19937_64 rng(3);
  const auto v = critic.value_dist(random_matrix(3, 5, rng), random_matrix(1, 5, rng));
  for (Index j = 0; j < 5; ++j) {
    CHECK(v.q[j] == 0.0);
    CHECK(v.sigma[j] == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-12));
  }
}

TEST_CASE("sigma stays positive for extreme raw heads") {
  std::mt19937_64 rng(5);
  for (double raw : {-300.0, -40.0, -5.0, 0.0, 5.0, 40.0}) {
    const auto critic = const_critic(2, 1, 0.0, raw);
    const auto v = critic.value_dist(random_matrix(2, 3, rng), random_matrix(1, 3, rng));
    for (Index j = 0; j < 3; ++j) CHECK(v.sigma[j] > 0.0);
  }
}

TEST_CASE("Q head matches the naive trunk oracle") {
  std::mt19937_64 rng(7);
  dist_critic::CriticNet critic(3, 2, {9, 6});
  critic.init(rng);
  const Matrix s = random_matrix(3, 4, rng);
  const Matrix a = random_matrix(2, 4, rng);
  const auto v = critic.value_dist(s, a);
  for (Index j = 0; j < 4; ++j) {
    Vector sa(5);
    sa.head(3) = s.col(j);
    sa.tail(2) = a.col(j);
    const Vector out = oracles::net_eval(critic.net().dims(), critic.net().params(), sa);
    CHECK(v.q[j] == doctest::Approx(out[0]).epsilon(1e-12));
    CHECK(v.raw[j] == doctest::Approx(out[1]).epsilon(1e-12));
  }
}

TEST_CASE("q_action_grad matches finite differences") {
  std::mt19937_64 rng(9);
  dist_critic::CriticNet critic(2, 2, {8});
  critic.init(rng);
  const Matrix s = random_matrix(2, 3, rng);
  const Matrix a = random_matrix(2, 3, rng).array().tanh();
  const Matrix got = critic.q_action_grad(s, a);
  for (Index j = 0; j < 3; ++j) {
    auto f = [&](const Vector& aj) {
      return critic.value_dist(s.col(j), aj).q[0];
    };
    const Vector want = finite_diff_grad(f, a.col(j), 1e-6);
    CHECK(rel_err(got.col(j), want) < 1e-6);
  }
}

TEST_CASE("bellman targets: terminal rows bootstrap to r") {
  std::mt19937_64 rng(11);
  dist_critic::CriticNet target(2, 1, {6});
  target.init(rng);
  policy::PolicyNet pol(2, 1, {6});
  pol.init(rng);
  auto batch = random_batch(2, 1, 8, rng);
  batch.done.setOnes();
  const auto t = dist_critic::bellman_targets(target, pol, batch, 0.2, 0.99, rng);
  for (Index j = 0; j < 8; ++j) {
    CHECK(t.y_q[j] == doctest::Approx(batch.r[j]).epsilon(1e-14));
    CHECK(t.y_z[j] == doctest::Approx(batch.r[j]).epsilon(1e-14));
  }
}

TEST_CASE("bellman targets: vanishing sigma collapses y_Z onto y_Q") {
  std::mt19937_64 rng(13);
  // raw -40 puts softplus at ~4e-18; with eps_sigma = 1e-6 the target scale
  // is 1e-6, so the sampled and mean targets agree to ~1e-5.
  const auto target = const_critic(2, 1, 0.7, -40.0);
  policy::PolicyNet pol(2, 1, {6});
  pol.init(rng);
  const auto batch = random_batch(2, 1, 16, rng, 0.0);
  const auto t = dist_critic::bellman_targets(target, pol, batch, 0.1, 0.99, rng);
  CHECK((t.y_z - t.y_q).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("bellman targets: alpha 0 on the two-state MDP matches hand values") {
  std::mt19937_64 rng(17);
  // Constant target critic Q = 2.5; batch transitions from the toy MDP.
  const auto target = const_critic(1, 1, 2.5, -40.0);
  policy::PolicyNet pol(1, 1, {4});
  pol.init(rng);
  buffers::Batch batch;
  batch.s = (Matrix(1, 2) << 0.0, 1.0).finished();
  batch.a = Matrix::Zero(1, 2);
  batch.r = (Vector(2) << 1.0, 0.0).finished();
  batch.s_next = (Matrix(1, 2) << 1.0, 0.0).finished();
  batch.done = Vector::Zero(2);
  const double gamma = 0.9;
  const auto t = dist_critic::bellman_targets(target, pol, batch, 0.0, gamma, rng);
  CHECK(t.y_q[0] == doctest::Approx(1.0 + gamma * 2.5).epsilon(1e-9));
  CHECK(t.y_q[1] == doctest::Approx(0.0 + gamma * 2.5).epsilon(1e-9));
}

TEST_CASE("bellman targets: entropy term enters with -alpha * logp") {
  std::mt19937_64 rng(19);
  const auto target = const_critic(2, 1, 1.0, -40.0);
  policy::PolicyNet pol(2, 1, {6});
  pol.init(rng);
  const auto batch = random_batch(2, 1, 6, rng, 0.0);
  std::mt19937_64 r1(55), r2(55);
  const auto t0 = dist_critic::bellman_targets(target, pol, batch, 0.0, 0.99, r1);
  const auto t1 = dist_critic::bellman_targets(target, pol, batch, 0.5, 0.99, r2);
  // Same rng draws => same a', logp'; the difference is exactly
  // -gamma * alpha * logp per row.
  for (Index j = 0; j < 6; ++j)
    CHECK(t1.y_q[j] - t0.y_q[j] ==
          doctest::Approx(-0.99 * 0.5 * t1.logp_next[j]).epsilon(1e-10));
}

TEST_CASE("bellman targets: parameter validation") {
  std::mt19937_64 rng(21);
  const auto target = const_critic(2, 1, 0.0, 0.0);
  policy::PolicyNet pol(2, 1, {4});
  pol.init(rng);
  const auto batch = random_batch(2, 1, 4, rng);
  CHECK_THROWS_AS(dist_critic::bellman_targets(target, pol, batch, -0.1, 0.99, rng),
                  BoundsError);
  CHECK_THROWS_AS(dist_critic::bellman_targets(target, pol, batch, 0.1, 1.0, rng),
                  BoundsError);
}

TEST_CASE("clip_target") {
  CHECK(dist_critic::clip_target(1.3, 1.0, 0.5) == 1.3);
  CHECK(dist_critic::clip_target(2.0, 1.0, 0.5) == 1.5);
  CHECK(dist_critic::clip_target(0.0, 1.0, 0.5) == 0.5);
  CHECK(dist_critic::clip_target(1.0 + 1.0, 1.0, 0.5) == 1.5);  // y = Q + 2b
  CHECK(dist_critic::clip_target(1.0 - 1.0, 1.0, 0.5) == 0.5);  // y = Q - 2b
}

TEST_CASE("critic_gradient: vanishing residuals give a zero gradient") {
  // Zero-weight critic: Q = 0, sigma = s0. Targets with y_Q = Q and
  // (y_Z - Q)^2 = sigma^2 kill both gradient terms exactly.
  const auto critic = const_critic(2, 1, 0.0, 0.0, 0.0);
  std::mt19937_64 rng(23);
  const auto batch = random_batch(2, 1, 8, rng);
  const double s0 = std::log(2.0);  // softplus(0), eps_sigma = 0
  dist_critic::CriticTargets t;
  t.y_q = Vector::Zero(8);
  t.y_z = Vector::Zero(8);
  for (Index j = 0; j < 8; ++j) t.y_z[j] = (j % 2 ? s0 : -s0);
  dist_critic::ClipState clip;  // b = 1 > s0: clip inactive
  const auto g = dist_critic::critic_gradient(critic, batch, t, clip);
  CHECK(g.grad.norm() < 1e-14);
  CHECK(g.sigma_mean == doctest::Approx(s0).epsilon(1e-12));
}

TEST_CASE("critic_gradient: hand-set single-row coefficients") {
  // Q=0, sigma=1, y_Q=1, clip(y_Z)=1, omega=1, eps=0. The output-side
  // coefficients are (-1, 0); on a bias-only critic they surface directly in
  // the bias entries of the gradient.
  const double raw_for_unit_sigma = std::log(std::exp(1.0) - 1.0);
  const auto critic = const_critic(2, 1, 0.0, raw_for_unit_sigma, 0.0);
  std::mt19937_64 rng(29);
  auto batch = random_batch(2, 1, 1, rng);
  dist_critic::CriticTargets t;
  t.y_q = Vector::Constant(1, 1.0);
  t.y_z = Vector::Constant(1, 1.0);
  dist_critic::ClipState clip;  // b = 1, omega = 1
  const auto g = dist_critic::critic_gradient(critic, batch, t, clip);
  const auto& b0 = critic.net().manifest().find("b0");
  CHECK(g.grad[b0.offset] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(g.grad[b0.offset + 1] == doctest::Approx(0.0).epsilon(1e-12));
  // loss reported as the Gaussian NLL of y_Q
  CHECK(g.loss == doctest::Approx(0.5 + 0.5 * std::log(2.0 * 3.14159265358979323846))
                      .epsilon(1e-12));
}

TEST_CASE("critic_gradient matches the NLL oracle when the clip is inactive") {
  std::mt19937_64 rng(31);
  int instances = 0;
  for (int trial = 0; trial < 10; ++trial) {
    dist_critic::CriticNet critic(2, 1, {7}, 0.0);
    critic.init(rng);
    const Index k = 5;
    const auto batch = random_batch(2, 1, k, rng);
    const auto v = critic.value_dist(batch.s, batch.a);
    dist_critic::CriticTargets t;
    // y_Z = y_Q near Q: with y shared, the update is exactly the NLL gradient.
    t.y_q = v.q + 0.3 * random_matrix(1, k, rng).row(0).transpose();
    t.y_z = t.y_q;
    dist_critic::ClipState clip;
    clip.b = 1e6;  // inactive
    clip.omega = 1.0;
    const auto g = dist_critic::critic_gradient(critic, batch, t, clip);

    dist_critic::CriticNet probe(2, 1, {7}, 0.0);
    auto f = [&](const Vector& p) {
      probe.net().set_params(p);
      return frozen_nll(probe, batch, t.y_q, t.y_z);
    };
    const Vector want = finite_diff_grad(f, critic.net().params(), 1e-5);
    CHECK(rel_err(g.grad, want) < 1e-6);
    ++instances;
  }
  CHECK(instances == 10);
}

TEST_CASE("critic_gradient: omega scales the whole gradient") {
  std::mt19937_64 rng(37);
  dist_critic::CriticNet critic(2, 1, {6});
  critic.init(rng);
  const auto batch = random_batch(2, 1, 6, rng);
  const auto v = critic.value_dist(batch.s, batch.a);
  dist_critic::CriticTargets t;
  t.y_q = v.q + Vector::Constant(6, 0.4);
  t.y_z = v.q + Vector::Constant(6, 0.1);
  dist_critic::ClipState c1;
  c1.omega = 1.0;
  dist_critic::ClipState c2;
  c2.omega = 1.7;
  const auto g1 = dist_critic::critic_gradient(critic, batch, t, c1);
  const auto g2 = dist_critic::critic_gradient(critic, batch, t, c2);
  CHECK(rel_err(g2.grad, Vector(1.7 * g1.grad)) < 1e-10);
}

TEST_CASE("critic_gradient: standard mode is the plain MSE gradient") {
  std::mt19937_64 rng(41);
  dist_critic::CriticNet critic(2, 1, {6});
  critic.init(rng);
  const Index k = 5;
  const auto batch = random_batch(2, 1, k, rng);
  const auto v = critic.value_dist(batch.s, batch.a);
  dist_critic::CriticTargets t;
  t.y_q = v.q + 0.5 * random_matrix(1, k, rng).row(0).transpose();
  t.y_z = t.y_q + Vector::Constant(k, 10.0);  // must be ignored entirely
  dist_critic::ClipState clip;
  clip.omega = 3.0;  // must be ignored too
  const auto g = dist_critic::critic_gradient(critic, batch, t, clip, true);

  dist_critic::CriticNet probe(2, 1, {6});
  auto f = [&](const Vector& p) {
    probe.net().set_params(p);
    const auto pv = probe.value_dist(batch.s, batch.a);
    return 0.5 * (t.y_q - pv.q).squaredNorm() / static_cast<double>(k);
  };
  const Vector want = finite_diff_grad(f, critic.net().params(), 1e-5);
  CHECK(rel_err(g.grad, want) < 1e-6);
  CHECK(g.loss == doctest::Approx(0.5 * (t.y_q - v.q).squaredNorm() / k).epsilon(1e-12));
}

TEST_CASE("targets carry no gradient from the online critic") {
  std::mt19937_64 rng(43);
  dist_critic::CriticNet target(2, 1, {6});
  target.init(rng);
  policy::PolicyNet pol(2, 1, {6});
  pol.init(rng);
  const auto batch = random_batch(2, 1, 6, rng);
  std::mt19937_64 r1(7), r2(7);
  const auto t1 = dist_critic::bellman_targets(target, pol, batch, 0.2, 0.99, r1);
  const auto t2 = dist_critic::bellman_targets(target, pol, batch, 0.2, 0.99, r2);
  CHECK((t1.y_q - t2.y_q).norm() == 0.0);
  CHECK((t1.y_z - t2.y_z).norm() == 0.0);
}

TEST_CASE("update_clip_state") {
  dist_critic::ClipState c;
  c.b = 1.0;
  c.omega = 1.0;
  c.tau = 0.0;
  c.kappa_b = 1.0;
  dist_critic::update_clip_state(c, 2.0, 4.5);
  CHECK(c.b == 2.0);
  CHECK(c.omega == 4.5);

  dist_critic::ClipState frozen;
  frozen.tau = 1.0;
  dist_critic::update_clip_state(frozen, 9.0, 9.0);
  CHECK(frozen.b == 1.0);
  CHECK(frozen.omega == 1.0);

  dist_critic::ClipState mid;
  mid.b = 1.0;
  mid.tau = 0.5;
  dist_critic::update_clip_state(mid, 2.0, 1.0);
  CHECK(mid.b == doctest::Approx(1.5).epsilon(1e-12));

  dist_critic::ClipState scaled;
  scaled.tau = 0.0;
  scaled.kappa_b = 0.5;
  dist_critic::update_clip_state(scaled, 2.0, 4.0);
  CHECK(scaled.b == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(dist_critic::update_clip_state(mid, std::nan(""), 1.0), ContractError);
}

TEST_CASE("clip and omega positivity preserved across updates") {
  dist_critic::ClipState c;
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = u(rng);
    dist_critic::update_clip_state(c, s, s * s);
    CHECK(c.b > 0.0);
    CHECK(c.omega > 0.0);
  }
}

}  // TEST_SUITE
