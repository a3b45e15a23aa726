#include "lsac/diffusion.hpp"

#include <cmath>

namespace lsac::diffusion {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw BoundsError("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw BoundsError("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(T);
  s.alpha_bars.resize(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    s.betas[t] = T == 1 ? beta_min
                        : beta_min + (beta_max - beta_min) * static_cast<double>(t) /
                              static_cast<double>(T - 1);
    prod *= 1.0 - s.betas[t];
    s.alpha_bars[t] = prod;
  }
  return s;
}

Denoiser::Denoiser(Index tuple_dim, const std::vector<Index>& hidden, Index emb_dim)
    : tuple_dim_(tuple_dim), emb_dim_(emb_dim) {
  if (emb_dim < 2 || emb_dim % 2 != 0)
    throw ShapeError("Denoiser: emb_dim must be even and >= 2");
  std::vector<Index> dims;
  dims.push_back(tuple_dim + emb_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(tuple_dim);
  net_ = nn::DenseNet(dims);
}

Vector Denoiser::time_embedding(int t) const {
  const Index half = emb_dim_ / 2;
  Vector emb(emb_dim_);
  for (Index j = 0; j < half; ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(half));
    emb[2 * j] = std::sin(t * freq);
    emb[2 * j + 1] = std::cos(t * freq);
  }
  return emb;
}

Matrix Denoiser::predict(const Matrix& x_t, int t, nn::ForwardCache* cache) const {
  if (x_t.rows() != tuple_dim_) throw ShapeError("Denoiser: tuple dim mismatch");
  Matrix input(tuple_dim_ + emb_dim_, x_t.cols());
  input.topRows(tuple_dim_) = x_t;
  input.bottomRows(emb_dim_).colwise() = time_embedding(t);
  return net_.forward(input, cache);
}

DenoiserLoss denoiser_loss_at(const Denoiser& denoiser, const NoiseSchedule& schedule,
                              const NormalizedBatch& batch, const std::vector<int>& ts,
                              const Matrix& z) {
  if (!batch.normalized)
    throw ContractError("denoiser_loss: batch is not marked normalized");
  if (batch.x.rows() != denoiser.tuple_dim())
    throw ShapeError("denoiser_loss: tuple dim mismatch");
  const Index d = denoiser.tuple_dim(), k = batch.x.cols();
  if (static_cast<Index>(ts.size()) != k || z.rows() != d || z.cols() != k)
    throw ShapeError("denoiser_loss: ts/z shape mismatch");

  // Group columns by t so each group runs one batched forward/backward; the
  // time embedding is constant within a group.
  std::vector<std::vector<Index>> by_t(static_cast<std::size_t>(schedule.T) + 1);
  for (Index j = 0; j < k; ++j) {
    if (ts[static_cast<std::size_t>(j)] < 1 || ts[static_cast<std::size_t>(j)] > schedule.T)
      throw BoundsError("denoiser_loss: timestep out of schedule range");
    by_t[static_cast<std::size_t>(ts[static_cast<std::size_t>(j)])].push_back(j);
  }

  DenoiserLoss out;
  out.grad = Vector::Zero(denoiser.net().param_count());
  const double inv_k = 1.0 / static_cast<double>(k);
  for (int t = 1; t <= schedule.T; ++t) {
    const auto& cols = by_t[static_cast<std::size_t>(t)];
    if (cols.empty()) continue;
    const double sab = std::sqrt(schedule.alpha_bars[t - 1]);
    const double snb = std::sqrt(1.0 - schedule.alpha_bars[t - 1]);
    Matrix x_t(d, static_cast<Index>(cols.size()));
    Matrix z_t(d, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      z_t.col(static_cast<Index>(c)) = z.col(cols[c]);
      x_t.col(static_cast<Index>(c)) =
          sab * batch.x.col(cols[c]) + snb * z.col(cols[c]);
    }
    nn::ForwardCache cache;
    const Matrix pred = denoiser.predict(x_t, t, &cache);
    const Matrix resid = pred - z_t;
    out.loss += resid.squaredNorm() * inv_k;
    out.grad += denoiser.net().backward(cache, 2.0 * inv_k * resid);
  }
  return out;
}

DenoiserLoss denoiser_loss(const Denoiser& denoiser, const NoiseSchedule& schedule,
                           const NormalizedBatch& batch, std::mt19937_64& rng) {
  if (batch.x.rows() != denoiser.tuple_dim())
    throw ShapeError("denoiser_loss: tuple dim mismatch");
  const Index d = denoiser.tuple_dim(), k = batch.x.cols();
  std::uniform_int_distribution<int> pick_t(1, schedule.T);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> ts(static_cast<std::size_t>(k));
  Matrix z(d, k);
  for (Index j = 0; j < k; ++j) {
    ts[static_cast<std::size_t>(j)] = pick_t(rng);
    for (Index i = 0; i < d; ++i) z(i, j) = normal(rng);
  }
  return denoiser_loss_at(denoiser, schedule, batch, ts, z);
}

double train_denoiser(Denoiser& denoiser, const NoiseSchedule& schedule,
                      const Matrix& normalized_tuples, int steps, Index batch_size,
                      double lr, std::mt19937_64& rng) {
  if (normalized_tuples.cols() < 2)
    throw ContractError("train_denoiser: need at least 2 tuples");
  nn::AdamState adam(denoiser.net().param_count());
  nn::AdamConfig acfg;
  acfg.lr = lr;
  std::uniform_int_distribution<Index> pick(0, normalized_tuples.cols() - 1);
  Vector params = denoiser.net().params();
  const int tail_start = steps - std::max(1, steps / 10);
  double tail_loss = 0.0;
  int tail_n = 0;
  for (int s = 0; s < steps; ++s) {
    Matrix mb(normalized_tuples.rows(), std::min(batch_size, normalized_tuples.cols()));
    for (Index j = 0; j < mb.cols(); ++j) mb.col(j) = normalized_tuples.col(pick(rng));
    const auto dl = denoiser_loss(denoiser, schedule, NormalizedBatch::wrap(std::move(mb)), rng);
    nn::adam_step(params, dl.grad, adam, acfg);
    denoiser.net().set_params(params);
    if (s >= tail_start) {
      tail_loss += dl.loss;
      ++tail_n;
    }
  }
  return tail_n > 0 ? tail_loss / tail_n : 0.0;
}

Matrix sample_transitions(const Denoiser& denoiser, const NoiseSchedule& schedule,
                          Index count, const buffers::NormStats& stats,
                          Index obs_dim, Index act_dim, std::mt19937_64& rng) {
  const Index d = denoiser.tuple_dim();
  if (stats.dim() + 1 != d) throw ShapeError("sample_transitions: stats dim mismatch");
  if (2 * obs_dim + act_dim + 2 != d)
    throw ShapeError("sample_transitions: obs/act dims do not match tuple dim");
  if (count == 0) return Matrix(d, 0);

  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(d, count);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < d; ++i) x(i, j) = normal(rng);

  for (int t = schedule.T; t >= 1; --t) {
    const double beta = schedule.betas[t - 1];
    const double snb = std::sqrt(1.0 - schedule.alpha_bars[t - 1]);
    const Matrix eps_hat = denoiser.predict(x, t);
    x = (x - (beta / snb) * eps_hat) / std::sqrt(1.0 - beta);
    if (t > 1) {
      const double sb = std::sqrt(beta);
      for (Index j = 0; j < count; ++j)
        for (Index i = 0; i < d; ++i) x(i, j) += sb * normal(rng);
    }
  }

  Matrix out = buffers::denormalize_tuples(x, stats);
  out.middleRows(obs_dim, act_dim) =
      out.middleRows(obs_dim, act_dim).array().min(1.0).max(-1.0);
  return out;
}

Matrix refine_actions(const Matrix& states, const Matrix& actions,
                      const dist_critic::CriticNet& critic, const RefineConfig& cfg) {
  if (states.cols() != actions.cols())
    throw ShapeError("refine_actions: batch size mismatch");
  Matrix a = actions;
  Matrix m = Matrix::Zero(a.rows(), a.cols());
  Matrix v = Matrix::Zero(a.rows(), a.cols());
  for (int s = 0; s < cfg.steps; ++s) {
    const Matrix g = critic.q_action_grad(states, a);
    m = cfg.m1 * m + (1.0 - cfg.m1) * g;
    v = cfg.m2 * v + (1.0 - cfg.m2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg.m1, s + 1);
    const double c2 = 1.0 - std::pow(cfg.m2, s + 1);
    a.array() += cfg.beta_a * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
    a = a.array().min(1.0).max(-1.0);
  }
  return a;
}

}  // namespace lsac::diffusion
