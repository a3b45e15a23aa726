#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "lsac/buffers.hpp"
#include "lsac/diffusion.hpp"
#include "oracles.hpp"

using namespace lsac;
using oracles::finite_diff_grad;
using oracles::rel_err;

namespace {

Matrix randn_mat(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

/// Critic over (s, a) with a = a* as the unique interior maximum of Q:
/// Q(a) = -[gelu(c(a - a*)) + gelu(-c(a - a*))], a smooth even bowl.
dist_critic::CriticNet bowl_critic(double a_star, double c = 2.0) {
  dist_critic::CriticNet critic(1, 1, {2});
  Vector p = Vector::Zero(critic.net().param_count());
  const auto& W0 = critic.net().manifest().find("W0");  // 2 x 2, column-major
  const auto& b0 = critic.net().manifest().find("b0");
  const auto& W1 = critic.net().manifest().find("W1");
  p[W0.offset + 1 * W0.rows + 0] = c;   // h1 <- c * a
  p[W0.offset + 1 * W0.rows + 1] = -c;  // h2 <- -c * a
  p[b0.offset + 0] = -c * a_star;
  p[b0.offset + 1] = c * a_star;
  p[W1.offset + 0 * W1.rows + 0] = -1.0;  // Q = -h1 - h2
  p[W1.offset + 1 * W1.rows + 0] = -1.0;
  critic.net().set_params(p);
  return critic;
}

/// Q = w . a, no hidden layer; the maximizer sits outside the action box.
dist_critic::CriticNet linear_critic(const Vector& w) {
  const Index act_dim = w.size();
  dist_critic::CriticNet critic(1, act_dim, {});
  Vector p = Vector::Zero(critic.net().param_count());
  const auto& W0 = critic.net().manifest().find("W0");
  for (Index j = 0; j < act_dim; ++j) p[W0.offset + (1 + j) * W0.rows + 0] = w[j];
  critic.net().set_params(p);
  return critic;
}

double mean_q(const dist_critic::CriticNet& critic, const Matrix& s, const Matrix& a) {
  return critic.value_dist(s, a).q.mean();
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("make_schedule: constant beta has the closed-form alpha_bar") {
  const auto s = diffusion::make_schedule(10, 0.1, 0.1);
  for (int t = 1; t <= 10; ++t) {
    CHECK(s.betas[t - 1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(s.alpha_bars[t - 1] == doctest::Approx(std::pow(0.9, t)).epsilon(1e-12));
  }
}

TEST_CASE("make_schedule: T = 1") {
  const auto s = diffusion::make_schedule(1, 0.05, 0.3);
  CHECK(s.T == 1);
  CHECK(s.alpha_bars[0] == doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("make_schedule: default desk schedule") {
  const auto s = diffusion::make_schedule(32, 1e-4, 0.2);
  CHECK(s.betas[0] == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.betas[31] == doctest::Approx(0.2).epsilon(1e-12));
  // linear spacing
  const double step = s.betas[1] - s.betas[0];
  for (int t = 2; t < 32; ++t)
    CHECK(s.betas[t] - s.betas[t - 1] == doctest::Approx(step).epsilon(1e-9));
  // strictly decreasing alpha_bar in (0,1], small tail
  double prev = 1.0;
  for (int t = 0; t < 32; ++t) {
    CHECK(s.alpha_bars[t] > 0.0);
    CHECK(s.alpha_bars[t] < prev);
    prev = s.alpha_bars[t];
  }
  CHECK(s.alpha_bars[31] < 0.05);
}

TEST_CASE("make_schedule: rejects bad ranges") {
  CHECK_THROWS_AS(diffusion::make_schedule(0, 0.1, 0.2), BoundsError);
  CHECK_THROWS_AS(diffusion::make_schedule(8, 0.0, 0.2), BoundsError);
  CHECK_THROWS_AS(diffusion::make_schedule(8, 0.3, 0.2), BoundsError);
  CHECK_THROWS_AS(diffusion::make_schedule(8, 0.1, 1.0), BoundsError);
}

TEST_CASE("time embedding: first pair is (sin t, cos t)") {
  diffusion::Denoiser den(5, {8});
  CHECK(den.emb_dim() == 16);
  for (int t : {1, 7, 32}) {
    const Vector e = den.time_embedding(t);
    REQUIRE(e.size() == 16);
    CHECK(e[0] == doctest::Approx(std::sin(t)).epsilon(1e-12));
    CHECK(e[1] == doctest::Approx(std::cos(t)).epsilon(1e-12));
    for (Index i = 0; i < 16; ++i) CHECK(std::abs(e[i]) <= 1.0);
  }
  CHECK((den.time_embedding(3) - den.time_embedding(4)).norm() > 1e-3);
  CHECK_THROWS_AS(diffusion::Denoiser(5, {8}, 7), ShapeError);
}

TEST_CASE("predict: zero net predicts zero; batch equals per-column") {
  diffusion::Denoiser den(4, {6}, 4);
  std::mt19937_64 rng(3);
  const Matrix x = randn_mat(4, 5, rng);
  const Matrix zero_pred = den.predict(x, 2);
  CHECK(zero_pred.norm() == 0.0);

  den.init(rng);
  const Matrix batch_pred = den.predict(x, 2);
  for (Index j = 0; j < 5; ++j) {
    const Matrix single = den.predict(x.col(j), 2);
    CHECK((batch_pred.col(j) - single.col(0)).norm() < 1e-12);
  }
  CHECK_THROWS_AS(den.predict(randn_mat(3, 2, rng), 1), ShapeError);
}

TEST_CASE("denoiser_loss_at: zero net and zero noise give zero loss") {
  diffusion::Denoiser den(4, {6}, 4);
  const auto sched = diffusion::make_schedule(8, 1e-4, 0.2);
  std::mt19937_64 rng(5);
  const auto batch = diffusion::NormalizedBatch::wrap(randn_mat(4, 6, rng));
  const std::vector<int> ts{1, 3, 8, 2, 5, 1};
  const auto dl = diffusion::denoiser_loss_at(den, sched, batch, ts, Matrix::Zero(4, 6));
  CHECK(dl.loss == 0.0);
  CHECK(dl.grad.norm() == 0.0);
}

TEST_CASE("denoiser_loss_at: zero net loss is mean squared noise") {
  diffusion::Denoiser den(3, {5}, 4);
  const auto sched = diffusion::make_schedule(4, 1e-3, 0.1);
  std::mt19937_64 rng(7);
  const auto batch = diffusion::NormalizedBatch::wrap(randn_mat(3, 5, rng));
  const Matrix z = randn_mat(3, 5, rng);
  const std::vector<int> ts{2, 1, 4, 3, 2};
  const auto dl = diffusion::denoiser_loss_at(den, sched, batch, ts, z);
  CHECK(dl.loss == doctest::Approx(z.squaredNorm() / 5.0).epsilon(1e-12));
}

TEST_CASE("denoiser_loss: non-negative and deterministic per seed") {
  diffusion::Denoiser den(4, {7}, 4);
  std::mt19937_64 init(9);
  den.init(init);
  const auto sched = diffusion::make_schedule(8, 1e-4, 0.2);
  const auto batch = diffusion::NormalizedBatch::wrap(randn_mat(4, 12, init));
  for (int rep = 0; rep < 5; ++rep) {
    std::mt19937_64 rng(100 + rep);
    CHECK(diffusion::denoiser_loss(den, sched, batch, rng).loss >= 0.0);
  }
  std::mt19937_64 r1(31), r2(31);
  const auto a = diffusion::denoiser_loss(den, sched, batch, r1);
  const auto b = diffusion::denoiser_loss(den, sched, batch, r2);
  CHECK(a.loss == b.loss);
  CHECK((a.grad - b.grad).norm() == 0.0);
}

TEST_CASE("denoiser_loss rejects unnormalized batches and bad shapes") {
  diffusion::Denoiser den(4, {7}, 4);
  const auto sched = diffusion::make_schedule(8, 1e-4, 0.2);
  std::mt19937_64 rng(3);
  diffusion::NormalizedBatch raw;
  raw.x = randn_mat(4, 3, rng);
  CHECK_THROWS_AS(diffusion::denoiser_loss(den, sched, raw, rng), ContractError);

  const auto batch = diffusion::NormalizedBatch::wrap(randn_mat(4, 3, rng));
  CHECK_THROWS_AS(
      diffusion::denoiser_loss_at(den, sched, batch, {1, 2}, Matrix::Zero(4, 3)),
      ShapeError);
  CHECK_THROWS_AS(
      diffusion::denoiser_loss_at(den, sched, batch, {1, 2, 9}, Matrix::Zero(4, 3)),
      BoundsError);
}

TEST_CASE("denoiser gradient matches finite differences") {
  const auto sched = diffusion::make_schedule(6, 1e-3, 0.15);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    diffusion::Denoiser den(3, {6}, 4);
    den.init(rng);
    const auto batch = diffusion::NormalizedBatch::wrap(randn_mat(3, 4, rng));
    std::vector<int> ts;
    std::uniform_int_distribution<int> pick(1, 6);
    for (int j = 0; j < 4; ++j) ts.push_back(pick(rng));
    const Matrix z = randn_mat(3, 4, rng);

    const auto got = diffusion::denoiser_loss_at(den, sched, batch, ts, z);
    diffusion::Denoiser probe(3, {6}, 4);
    auto f = [&](const Vector& p) {
      probe.net().set_params(p);
      return diffusion::denoiser_loss_at(probe, sched, batch, ts, z).loss;
    };
    const Vector want = finite_diff_grad(f, den.net().params(), 1e-5);
    CHECK(rel_err(got.grad, want) < 1e-6);
  }
}

TEST_CASE("sample_transitions: count 0 and shape validation") {
  diffusion::Denoiser den(5, {6}, 4);
  const auto sched = diffusion::make_schedule(8, 1e-4, 0.2);
  buffers::NormStats stats;
  stats.mean = Vector::Zero(4);
  stats.std = Vector::Ones(4);
  std::mt19937_64 rng(3);
  const Matrix empty = diffusion::sample_transitions(den, sched, 0, stats, 1, 1, rng);
  CHECK(empty.rows() == 5);
  CHECK(empty.cols() == 0);

  buffers::NormStats bad;
  bad.mean = Vector::Zero(3);
  bad.std = Vector::Ones(3);
  CHECK_THROWS_AS(diffusion::sample_transitions(den, sched, 2, bad, 1, 1, rng),
                  ShapeError);
  CHECK_THROWS_AS(diffusion::sample_transitions(den, sched, 2, stats, 2, 1, rng),
                  ShapeError);
}

TEST_CASE("sample_transitions: decode rules hold for an untrained denoiser") {
  diffusion::Denoiser den(5, {8}, 4);
  std::mt19937_64 init(17);
  den.init(init);
  const auto sched = diffusion::make_schedule(16, 1e-4, 0.2);
  buffers::NormStats stats;
  stats.mean = (Vector(4) << 0.5, 0.0, -1.0, 0.5).finished();
  stats.std = (Vector(4) << 1.0, 2.0, 0.5, 1.0).finished();
  std::mt19937_64 rng(19);
  const Matrix out = diffusion::sample_transitions(den, sched, 64, stats, 1, 1, rng);
  REQUIRE(out.rows() == 5);
  REQUIRE(out.cols() == 64);
  for (Index j = 0; j < 64; ++j) {
    CHECK(out(1, j) >= -1.0);  // action row
    CHECK(out(1, j) <= 1.0);
    CHECK((out(4, j) == 0.0 || out(4, j) == 1.0));  // done row
  }
  // determinism per seed
  std::mt19937_64 rng2(19);
  const Matrix again = diffusion::sample_transitions(den, sched, 64, stats, 1, 1, rng2);
  CHECK((out - again).norm() == 0.0);
}

TEST_CASE("trained denoiser reproduces single-mode transition statistics") {
  // Desk-scale fidelity smoke; the full two-mode criterion runs in the
  // acceptance suite.
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = 2000;
  buffers::RingBuffer buf(n, 1, 1);
  for (Index i = 0; i < n; ++i) {
    buffers::Transition t;
    t.s = Vector::Constant(1, 1.0 + 0.5 * normal(rng));
    t.a = Vector::Constant(1, std::tanh(0.7 * normal(rng)));
    t.r = -2.0 + 0.3 * normal(rng);
    t.s_next = Vector::Constant(1, 1.5 + 0.5 * normal(rng));
    t.done = 0.0;
    buf.push(t);
  }
  const auto stats = buffers::fit_norm_stats(buf);
  const Matrix normalized = buffers::normalize_tuples(buf.tuples(), stats);

  diffusion::Denoiser den(5, {48, 48});
  den.init(rng);
  const auto sched = diffusion::make_schedule(32, 1e-4, 0.2);

  const auto before = diffusion::denoiser_loss(
      den, sched, diffusion::NormalizedBatch::wrap(normalized), rng);
  const double tail = diffusion::train_denoiser(den, sched, normalized, 1500, 64, 1e-3, rng);
  CHECK(tail < 0.8 * before.loss);

  const Matrix sampled = diffusion::sample_transitions(den, sched, 2000, stats, 1, 1, rng);
  const Matrix data = buf.tuples();
  for (Index i = 0; i < 4; ++i) {  // (s, a, r, s'); done handled below
    const double dm = data.row(i).mean();
    const double ds = std::sqrt((data.row(i).array() - dm).square().mean());
    const double sm = sampled.row(i).mean();
    const double ss = std::sqrt((sampled.row(i).array() - sm).square().mean());
    CHECK(std::abs(sm - dm) / ds < 0.2);          // normalized-units mean gap
    CHECK(std::abs(ss - ds) / ds < 0.3);          // std ratio
  }
  CHECK(sampled.row(4).mean() < 0.2);  // done-rate of the all-continue data
}

TEST_CASE("refine_actions: beta_a = 0 leaves actions unchanged") {
  const auto critic = bowl_critic(0.3);
  std::mt19937_64 rng(29);
  const Matrix s = Matrix::Zero(1, 4);
  const Matrix a = randn_mat(1, 4, rng).array().tanh();
  diffusion::RefineConfig cfg;
  cfg.beta_a = 0.0;
  cfg.steps = 5;
  const Matrix out = diffusion::refine_actions(s, a, critic, cfg);
  CHECK((out - a).norm() == 0.0);
}

TEST_CASE("refine_actions: ascends the bowl critic toward the interior optimum") {
  const auto critic = bowl_critic(0.3);
  const Matrix s = Matrix::Zero(1, 4);
  Matrix a(1, 4);
  a << -0.8, -0.2, 0.6, 0.95;
  diffusion::RefineConfig cfg;
  cfg.beta_a = 0.02;
  double prev = mean_q(critic, s, a);
  for (int k = 1; k <= 10; ++k) {
    cfg.steps = k;
    const double cur = mean_q(critic, s, diffusion::refine_actions(s, a, critic, cfg));
    CHECK(cur > prev);
    prev = cur;
  }
  cfg.steps = 100;
  const Matrix settled = diffusion::refine_actions(s, a, critic, cfg);
  for (Index j = 0; j < 4; ++j) CHECK(std::abs(settled(0, j) - 0.3) < 0.1);
}

TEST_CASE("refine_actions: linear critic pins to the nearest boundary face") {
  const auto critic = linear_critic((Vector(2) << 3.0, -3.0).finished());
  const Matrix s = Matrix::Zero(1, 3);
  Matrix a(2, 3);
  a << -0.5, 0.0, 0.9,
       0.5, 0.0, -0.9;
  diffusion::RefineConfig cfg;
  cfg.beta_a = 0.05;
  cfg.steps = 400;
  const Matrix out = diffusion::refine_actions(s, a, critic, cfg);
  for (Index j = 0; j < 3; ++j) {
    CHECK(out(0, j) == 1.0);
    CHECK(out(1, j) == -1.0);
  }
}

TEST_CASE("refine_actions: deterministic and shape-checked") {
  const auto critic = bowl_critic(-0.2);
  std::mt19937_64 rng(31);
  const Matrix s = Matrix::Zero(1, 5);
  const Matrix a = randn_mat(1, 5, rng).array().tanh();
  diffusion::RefineConfig cfg;
  cfg.steps = 3;
  const Matrix o1 = diffusion::refine_actions(s, a, critic, cfg);
  const Matrix o2 = diffusion::refine_actions(s, a, critic, cfg);
  CHECK((o1 - o2).norm() == 0.0);
  CHECK_THROWS_AS(diffusion::refine_actions(Matrix::Zero(1, 2), a, critic, cfg),
                  ShapeError);
}

}  // TEST_SUITE
